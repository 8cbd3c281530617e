use super::{CodecError, LayerId};

/// Weight of the cosine term for the label and caption layers.
pub const DEFAULT_COSINE_WEIGHT: f64 = 4.0;

fn check(z: &[f64], z_hat: &[f64]) -> Result<(), CodecError> {
    if z.len() != z_hat.len() || z.is_empty() {
        return Err(CodecError::Shape(format!("target has {} values, prediction {}", z.len(), z_hat.len())));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mse(z: &[f64], z_hat: &[f64]) -> Result<f64, CodecError> {
    check(z, z_hat)?;
    Ok(z.iter().zip(z_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / z.len() as f64)
}

pub fn cosine(z: &[f64], z_hat: &[f64]) -> Result<f64, CodecError> {
    check(z, z_hat)?;
    let (nz, nh) = (norm(z), norm(z_hat));
    if nz == 0.0 || nh == 0.0 {
        return Err(CodecError::ZeroNorm);
    }
    let dot: f64 = z.iter().zip(z_hat).map(|(a, b)| a * b).sum();
    Ok(dot / (nz * nh))
}

/// Feature layers: `MSE + α(1 − cos)`. Thumbnail layer: `MSE`.
pub fn distortion(layer: LayerId, z: &[f64], z_hat: &[f64], alpha: f64) -> Result<f64, CodecError> {
    let m = mse(z, z_hat)?;
    match layer {
        LayerId::Thumbnail => Ok(m),
        _ => Ok(m + alpha * (1.0 - cosine(z, z_hat)?)),
    }
}

/// Distortion and its gradient with respect to the prediction.
pub fn distortion_grad(layer: LayerId, z: &[f64], z_hat: &[f64], alpha: f64) -> Result<(f64, Vec<f64>), CodecError> {
    let d = distortion(layer, z, z_hat, alpha)?;
    let n = z.len() as f64;
    let mut g: Vec<f64> = z.iter().zip(z_hat).map(|(a, b)| 2.0 * (b - a) / n).collect();
    if layer != LayerId::Thumbnail {
        let (nz, nh) = (norm(z), norm(z_hat));
        let cos = cosine(z, z_hat)?;
        for ((gi, a), b) in g.iter_mut().zip(z).zip(z_hat) {
            *gi -= alpha * (a / (nz * nh) - cos * b / (nh * nh));
        }
    }
    Ok((d, g))
}

/// `R + λ·D`.
pub fn rd_loss(rate_bits: f64, distortion: f64, lambda: f64) -> f64 {
    rate_bits + lambda * distortion
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, NeuralError, Param, Tensor};

/// Layer descriptor. Dense layers act on vectors, convolutional blocks on
/// `[channels, time]` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        input: usize,
        output: usize,
    },
    /// `skip(x) + W2·silu(W1·x + b1) + b2`, with a learned projection as
    /// skip when the widths differ.
    ResBlock {
        input: usize,
        output: usize,
    },
    /// Temporal residual block: strided conv, SiLU, conv; the skip path is a
    /// strided 1×1 conv unless shapes already agree.
    ConvResBlock {
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Dropout {
        rate: f64,
    },
    /// `γ ⊙ h + β` where `γ`, `β` are affine in the network context vector.
    Film {
        width: usize,
        context: usize,
    },
    Silu,
}

impl LayerSpec {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NeuralError> {
        let vector_of = |n: usize| -> Result<(), NeuralError> {
            if input != [n] {
                return Err(NeuralError::Shape(format!("{self:?} expects [{n}], got {input:?}")));
            }
            Ok(())
        };
        match *self {
            LayerSpec::Linear { input: i, output } | LayerSpec::ResBlock { input: i, output } => {
                vector_of(i)?;
                Ok(vec![output])
            }
            LayerSpec::ConvResBlock { input: c, output, kernel, stride } => {
                if input.len() != 2 || input[0] != c {
                    return Err(NeuralError::Shape(format!("{self:?} expects [{c}, T], got {input:?}")));
                }
                if kernel % 2 == 0 || stride == 0 {
                    return Err(NeuralError::Invalid(format!("{self:?}: kernel must be odd, stride positive")));
                }
                Ok(vec![output, conv_len(input[1], kernel, stride, kernel / 2)])
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() != 2 {
                    return Err(NeuralError::Shape(format!("pooling expects [C, T], got {input:?}")));
                }
                Ok(vec![input[0]])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NeuralError::Invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Film { width, .. } => {
                vector_of(width)?;
                Ok(vec![width])
            }
            LayerSpec::Silu => Ok(input.to_vec()),
        }
    }

    /// Width of the context vector this layer consumes, if any.
    pub fn context_width(&self) -> Option<usize> {
        match *self {
            LayerSpec::Film { context, .. } => Some(context),
            _ => None,
        }
    }
}

fn conv_len(t: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (t + 2 * pad - kernel) / stride + 1
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Feature-wise modulation `γ ⊙ h + β`.
pub fn film_modulate(h: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if gamma.len() != h.len() || beta.len() != h.len() {
        return Err(NeuralError::Shape(format!(
            "modulation widths γ={} β={} do not match h={}",
            gamma.len(),
            beta.len(),
            h.len()
        )));
    }
    Ok(h.iter().zip(gamma).zip(beta).map(|((h, g), b)| g * h + b).collect())
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Accumulates `gw += g ⊗ x`, `gb += g` and, when given, `gx += Wᵀ g`.
fn affine_backward(w: &[f64], x: &[f64], g: &[f64], gw: &mut [f64], gb: &mut [f64], gx: Option<&mut [f64]>) {
    let n_in = x.len();
    for (o, &go) in g.iter().enumerate() {
        gb[o] += go;
        if go == 0.0 {
            continue;
        }
        let row = &mut gw[o * n_in..(o + 1) * n_in];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += go * xi;
        }
    }
    if let Some(gx) = gx {
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            for (gxi, wi) in gx.iter_mut().zip(row) {
                *gxi += wi * go;
            }
        }
    }
}

struct ConvGeom {
    c_in: usize,
    c_out: usize,
    t_in: usize,
    t_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    /// Output positions `t` for which `t*stride + k - pad` lands inside the input.
    fn valid_range(&self, k: usize) -> std::ops::Range<usize> {
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(self.stride) };
        let hi = if self.t_in + self.pad > k {
            ((self.t_in + self.pad - k - 1) / self.stride + 1).min(self.t_out)
        } else {
            0
        };
        lo..hi.max(lo)
    }
}

fn conv1d(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.c_out * g.t_out];
    for co in 0..g.c_out {
        let orow = &mut out[co * g.t_out..(co + 1) * g.t_out];
        orow.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..g.c_in {
            let xrow = &x[ci * g.t_in..(ci + 1) * g.t_in];
            for k in 0..g.kernel {
                let wv = w[(co * g.c_in + ci) * g.kernel + k];
                if wv == 0.0 {
                    continue;
                }
                for t in g.valid_range(k) {
                    orow[t] += wv * xrow[t * g.stride + k - g.pad];
                }
            }
        }
    }
    out
}

fn conv1d_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    for co in 0..g.c_out {
        let grow = &gy[co * g.t_out..(co + 1) * g.t_out];
        gb[co] += grow.iter().sum::<f64>();
        for ci in 0..g.c_in {
            let xrow = &x[ci * g.t_in..(ci + 1) * g.t_in];
            for k in 0..g.kernel {
                let widx = (co * g.c_in + ci) * g.kernel + k;
                let range = g.valid_range(k);
                let mut acc = 0.0;
                for t in range.clone() {
                    acc += grow[t] * xrow[t * g.stride + k - g.pad];
                }
                gw[widx] += acc;
                if let Some(gx) = gx.as_deref_mut() {
                    let wv = w[widx];
                    let gxrow = &mut gx[ci * g.t_in..(ci + 1) * g.t_in];
                    for t in range {
                        gxrow[t * g.stride + k - g.pad] += wv * grow[t];
                    }
                }
            }
        }
    }
}

/// Values a layer keeps from its forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Linear { x: Vec<f64> },
    Res { x: Vec<f64>, pre: Vec<f64>, act: Vec<f64> },
    Conv { x: Vec<f64>, t_in: usize, pre: Vec<f64>, act: Vec<f64> },
    Pool { channels: usize, t: usize },
    Flatten,
    Dropout { mask: Option<Vec<f64>> },
    Film { h: Vec<f64>, gamma: Vec<f64> },
    Silu { x: Vec<f64> },
}

/// A layer descriptor together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<Param>,
}

impl Layer {
    pub fn new<R: Rng + ?Sized>(spec: LayerSpec, prefix: &str, rng: &mut R) -> Self {
        let name = |s: &str| format!("{prefix}.{s}");
        let params = match spec {
            LayerSpec::Linear { input, output } => vec![
                Param::fan_in_uniform(name("w"), vec![output, input], input, rng),
                Param::zeros(name("b"), vec![output]),
            ],
            LayerSpec::ResBlock { input, output } => {
                let mut p = vec![
                    Param::fan_in_uniform(name("w1"), vec![output, input], input, rng),
                    Param::zeros(name("b1"), vec![output]),
                    Param::fan_in_uniform(name("w2"), vec![output, output], output, rng),
                    Param::zeros(name("b2"), vec![output]),
                ];
                if input != output {
                    p.push(Param::fan_in_uniform(name("ws"), vec![output, input], input, rng));
                    p.push(Param::zeros(name("bs"), vec![output]));
                }
                p
            }
            LayerSpec::ConvResBlock { input, output, kernel, stride } => {
                let mut p = vec![
                    Param::fan_in_uniform(name("w1"), vec![output, input, kernel], input * kernel, rng),
                    Param::zeros(name("b1"), vec![output]),
                    Param::fan_in_uniform(name("w2"), vec![output, output, kernel], output * kernel, rng),
                    Param::zeros(name("b2"), vec![output]),
                ];
                if input != output || stride != 1 {
                    p.push(Param::fan_in_uniform(name("ws"), vec![output, input, 1], input, rng));
                    p.push(Param::zeros(name("bs"), vec![output]));
                }
                p
            }
            LayerSpec::Film { width, context } => vec![
                Param::zeros(name("wg"), vec![width, context]),
                Param::filled(name("bg"), vec![width], 1.0),
                Param::zeros(name("wb"), vec![width, context]),
                Param::zeros(name("bb"), vec![width]),
            ],
            LayerSpec::GlobalAvgPool | LayerSpec::Flatten | LayerSpec::Dropout { .. } | LayerSpec::Silu => vec![],
        };
        Layer { spec, params }
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.params[i].value
    }

    fn conv_geom(&self, c_in: usize, c_out: usize, t_in: usize, kernel: usize, stride: usize, pad: usize) -> ConvGeom {
        ConvGeom { c_in, c_out, t_in, t_out: conv_len(t_in, kernel, stride, pad), kernel, stride, pad }
    }

    /// `γ` and `β` for a modulation layer given the context vector.
    pub fn film_coefficients(&self, context: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        match self.spec {
            LayerSpec::Film { context: c, .. } if c == context.len() => {
                Ok((affine(self.p(0), self.p(1), context), affine(self.p(2), self.p(3), context)))
            }
            LayerSpec::Film { context: c, .. } => {
                Err(NeuralError::Shape(format!("modulation context width {} != {c}", context.len())))
            }
            _ => Err(NeuralError::Invalid("not a modulation layer".into())),
        }
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        input: Tensor,
        context: Option<&[f64]>,
        mode: Mode,
        rng: &mut R,
        record: bool,
    ) -> Result<(Tensor, Option<Cache>), NeuralError> {
        let out_shape = self.spec.output_shape(input.shape())?;
        let (out, cache) = match self.spec {
            LayerSpec::Linear { .. } => {
                let y = affine(self.p(0), self.p(1), input.data());
                (y, record.then(|| Cache::Linear { x: input.into_data() }))
            }
            LayerSpec::ResBlock { input: n_in, output: n_out } => {
                let x = input.data();
                let pre = affine(self.p(0), self.p(1), x);
                let act: Vec<f64> = pre.iter().map(|&v| silu(v)).collect();
                let mut y = affine(self.p(2), self.p(3), &act);
                if n_in != n_out {
                    let s = affine(self.p(4), self.p(5), x);
                    y.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                } else {
                    y.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                }
                (y, record.then(|| Cache::Res { x: input.into_data(), pre, act }))
            }
            LayerSpec::ConvResBlock { input: c_in, output: c_out, kernel, stride } => {
                let t_in = input.shape()[1];
                let pad = kernel / 2;
                let g1 = self.conv_geom(c_in, c_out, t_in, kernel, stride, pad);
                let pre = conv1d(&g1, input.data(), self.p(0), self.p(1));
                let act: Vec<f64> = pre.iter().map(|&v| silu(v)).collect();
                let g2 = self.conv_geom(c_out, c_out, g1.t_out, kernel, 1, pad);
                let mut y = conv1d(&g2, &act, self.p(2), self.p(3));
                if self.params.len() == 6 {
                    let gs = self.conv_geom(c_in, c_out, t_in, 1, stride, 0);
                    let s = conv1d(&gs, input.data(), self.p(4), self.p(5));
                    y.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                } else {
                    y.iter_mut().zip(input.data()).for_each(|(a, b)| *a += b);
                }
                (y, record.then(|| Cache::Conv { x: input.into_data(), t_in, pre, act }))
            }
            LayerSpec::GlobalAvgPool => {
                let (c, t) = (input.shape()[0], input.shape()[1]);
                let y = input.data().chunks(t).map(|row| row.iter().sum::<f64>() / t as f64).collect();
                (y, record.then_some(Cache::Pool { channels: c, t }))
            }
            LayerSpec::Flatten => (input.into_data(), record.then_some(Cache::Flatten)),
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Train && rate > 0.0 {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> =
                        (0..input.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                    let y = input.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
                    (y, record.then_some(Cache::Dropout { mask: Some(mask) }))
                } else {
                    (input.into_data(), record.then_some(Cache::Dropout { mask: None }))
                }
            }
            LayerSpec::Film { .. } => {
                let ctx =
                    context.ok_or_else(|| NeuralError::Invalid("modulation layer needs a context vector".into()))?;
                let (gamma, beta) = self.film_coefficients(ctx)?;
                let y = film_modulate(input.data(), &gamma, &beta)?;
                (y, record.then(|| Cache::Film { h: input.into_data(), gamma }))
            }
            LayerSpec::Silu => {
                let y = input.data().iter().map(|&v| silu(v)).collect();
                (y, record.then(|| Cache::Silu { x: input.into_data() }))
            }
        };
        let out = Tensor::new(out_shape, out)?;
        if !out.is_finite() {
            return Err(NeuralError::NonFinite(format!("output of {:?}", self.spec)));
        }
        Ok((out, cache))
    }

    /// Reverse pass for one layer. Parameter gradients are accumulated into
    /// `grads` (one buffer per parameter of this layer), context gradients
    /// into `ctx_grad`.
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        gy: &[f64],
        context: Option<&[f64]>,
        grads: &mut [Vec<f64>],
        ctx_grad: &mut [f64],
    ) -> Vec<f64> {
        match (&self.spec, cache) {
            (LayerSpec::Linear { .. }, Cache::Linear { x }) => {
                let mut gx = vec![0.0; x.len()];
                let (gw, gb) = grads.split_at_mut(1);
                affine_backward(self.p(0), x, gy, &mut gw[0], &mut gb[0], Some(&mut gx));
                gx
            }
            (LayerSpec::ResBlock { input, output }, Cache::Res { x, pre, act }) => {
                let mut gx = if input == output { gy.to_vec() } else { vec![0.0; x.len()] };
                let mut gact = vec![0.0; act.len()];
                {
                    let (a, b) = grads[2..4].split_at_mut(1);
                    affine_backward(self.p(2), act, gy, &mut a[0], &mut b[0], Some(&mut gact));
                }
                let gpre: Vec<f64> = gact.iter().zip(pre).map(|(g, &p)| g * silu_grad(p)).collect();
                {
                    let (a, b) = grads[0..2].split_at_mut(1);
                    affine_backward(self.p(0), x, &gpre, &mut a[0], &mut b[0], Some(&mut gx));
                }
                if input != output {
                    let (a, b) = grads[4..6].split_at_mut(1);
                    affine_backward(self.p(4), x, gy, &mut a[0], &mut b[0], Some(&mut gx));
                }
                gx
            }
            (LayerSpec::ConvResBlock { input, output, kernel, stride }, Cache::Conv { x, t_in, pre, act }) => {
                let pad = kernel / 2;
                let g1 = self.conv_geom(*input, *output, *t_in, *kernel, *stride, pad);
                let g2 = self.conv_geom(*output, *output, g1.t_out, *kernel, 1, pad);
                let mut gx = if self.params.len() == 6 { vec![0.0; x.len()] } else { gy.to_vec() };
                let mut gact = vec![0.0; act.len()];
                {
                    let (a, b) = grads[2..4].split_at_mut(1);
                    conv1d_backward(&g2, act, self.p(2), gy, &mut a[0], &mut b[0], Some(&mut gact));
                }
                let gpre: Vec<f64> = gact.iter().zip(pre).map(|(g, &p)| g * silu_grad(p)).collect();
                {
                    let (a, b) = grads[0..2].split_at_mut(1);
                    conv1d_backward(&g1, x, self.p(0), &gpre, &mut a[0], &mut b[0], Some(&mut gx));
                }
                if self.params.len() == 6 {
                    let gs = self.conv_geom(*input, *output, *t_in, 1, *stride, 0);
                    let (a, b) = grads[4..6].split_at_mut(1);
                    conv1d_backward(&gs, x, self.p(4), gy, &mut a[0], &mut b[0], Some(&mut gx));
                }
                gx
            }
            (LayerSpec::GlobalAvgPool, Cache::Pool { channels, t }) => {
                let mut gx = Vec::with_capacity(channels * t);
                for &g in gy {
                    gx.extend(std::iter::repeat_n(g / *t as f64, *t));
                }
                gx
            }
            (LayerSpec::Flatten, Cache::Flatten) => gy.to_vec(),
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(m) => gy.iter().zip(m).map(|(g, m)| g * m).collect(),
                None => gy.to_vec(),
            },
            (LayerSpec::Film { .. }, Cache::Film { h, gamma }) => {
                let ctx = context.expect("modulation tape recorded without context");
                let gh: Vec<f64> = gy.iter().zip(gamma).map(|(g, c)| g * c).collect();
                let ggamma: Vec<f64> = gy.iter().zip(h).map(|(g, h)| g * h).collect();
                let (gg, gb) = grads.split_at_mut(2);
                {
                    let (a, b) = gg.split_at_mut(1);
                    affine_backward(self.p(0), ctx, &ggamma, &mut a[0], &mut b[0], Some(ctx_grad));
                }
                {
                    let (a, b) = gb.split_at_mut(1);
                    affine_backward(self.p(2), ctx, gy, &mut a[0], &mut b[0], Some(ctx_grad));
                }
                gh
            }
            (LayerSpec::Silu, Cache::Silu { x }) => gy.iter().zip(x).map(|(g, &v)| g * silu_grad(v)).collect(),
            (spec, _) => unreachable!("tape entry does not match layer {spec:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn film_direct_evaluation() {
        assert_eq!(film_modulate(&[1.0, 2.0], &[2.0, 0.5], &[1.0, -1.0]).unwrap(), vec![3.0, 0.0]);
        let h = [0.3, -1.2, 5.0];
        assert_eq!(film_modulate(&h, &[1.0; 3], &[0.0; 3]).unwrap(), h.to_vec());
        assert_eq!(film_modulate(&h, &[0.0; 3], &[0.5, 0.25, -2.0]).unwrap(), vec![0.5, 0.25, -2.0]);
        assert!(film_modulate(&h, &[1.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn film_layer_initializes_to_identity() {
        let layer = Layer::new(LayerSpec::Film { width: 3, context: 4 }, "f", &mut rng());
        let (g, b) = layer.film_coefficients(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(g, vec![1.0; 3]);
        assert_eq!(b, vec![0.0; 3]);
        assert!(layer.film_coefficients(&[0.0; 3]).is_err());
    }

    #[test]
    fn conv_output_length_matches_stride_two_schedule() {
        let spec = LayerSpec::ConvResBlock { input: 128, output: 256, kernel: 3, stride: 2 };
        assert_eq!(spec.output_shape(&[128, 440]).unwrap(), vec![256, 220]);
        assert_eq!(spec.output_shape(&[128, 7]).unwrap(), vec![256, 4]);
        assert!(spec.output_shape(&[64, 440]).is_err());
        let even = LayerSpec::ConvResBlock { input: 1, output: 1, kernel: 2, stride: 1 };
        assert!(even.output_shape(&[1, 4]).is_err());
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut r = rng();
        let g = ConvGeom { c_in: 2, c_out: 3, t_in: 9, t_out: conv_len(9, 3, 2, 1), kernel: 3, stride: 2, pad: 1 };
        let x: Vec<f64> = (0..18).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..18).map(|_| r.gen_range(-1.0..1.0)).collect();
        let b = [0.1, -0.2, 0.3];
        let y = conv1d(&g, &x, &w, &b);
        for co in 0..3 {
            for t in 0..g.t_out {
                let mut acc = b[co];
                for ci in 0..2 {
                    for k in 0..3 {
                        let s = (t * 2 + k) as isize - 1;
                        if (0..9).contains(&s) {
                            acc += w[(co * 2 + ci) * 3 + k] * x[ci * 9 + s as usize];
                        }
                    }
                }
                assert!((acc - y[co * g.t_out + t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_rate_zero_is_identity_in_train_mode() {
        let layer = Layer::new(LayerSpec::Dropout { rate: 0.0 }, "d", &mut rng());
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let (y, _) = layer.forward(x.clone(), None, Mode::Train, &mut rng(), false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn inverted_dropout_preserves_mean() {
        let layer = Layer::new(LayerSpec::Dropout { rate: 0.25 }, "d", &mut rng());
        let x = Tensor::vector(vec![1.0; 200_000]);
        let (y, _) = layer.forward(x, None, Mode::Train, &mut rng(), false).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
    }
}

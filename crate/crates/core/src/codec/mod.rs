//! The three layer codecs and their training objectives.
//!
//! Each [`LayerCodec`] owns an encoder, a decoder, an optional context
//! network (caption layer only) and a factorized density over its latent.
//! Once per-channel medians are set the codec also holds quantized tables
//! and can turn a signal into a range-coded payload and back.

mod arch;
mod distortion;

pub use arch::{ArchScale, CodecArch, THUMBNAIL_LEN, THUMBNAIL_SIDE};
pub use distortion::{cosine, distortion, distortion_grad, mse, rd_loss, DEFAULT_COSINE_WEIGHT};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{
    add_uniform_noise, build_pmf_table, quantize, range_decode, range_encode, CodingError, FactorizedDensity, PmfTable,
    QuantizedCode,
};
use crate::neural::{Grads, Mode, Network, NeuralError, Param, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerId {
    /// Object-level label feature.
    Label = 1,
    /// Image-level caption feature.
    Caption = 2,
    /// Stimulus-level thumbnail.
    Thumbnail = 3,
}

impl LayerId {
    pub const ALL: [LayerId; 3] = [LayerId::Label, LayerId::Caption, LayerId::Thumbnail];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(LayerId::Label),
            2 => Some(LayerId::Caption),
            3 => Some(LayerId::Thumbnail),
            _ => None,
        }
    }
}

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid codec layout: {0}")]
    Arch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cosine distortion of a zero-norm vector")]
    ZeroNorm,
    #[error("caption layer decoding needs a label-level condition")]
    MissingCondition,
    #[error("layer {0} takes no condition")]
    UnexpectedCondition(LayerId),
    #[error("code belongs to layer {found}, codec is layer {expected}")]
    WrongLayer { expected: LayerId, found: LayerId },
    #[error("codec has no probability tables; set channel medians first")]
    NoTables,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// Decoded label-level or caption-level vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeature {
    pub level: LayerId,
    pub values: Vec<f64>,
}

/// 32×32 RGB image stored row-major with interleaved channels, values in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thumbnail {
    data: Vec<f64>,
}

impl Thumbnail {
    /// Clamps `data` into `[0, 1]`.
    pub fn new(data: Vec<f64>) -> Result<Self, CodecError> {
        if data.len() != THUMBNAIL_LEN {
            return Err(CodecError::Shape(format!("thumbnail needs {THUMBNAIL_LEN} values, got {}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::Neural(NeuralError::NonFinite("thumbnail".into())));
        }
        Ok(Thumbnail { data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect() })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value at row `y`, column `x`, channel `c`.
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * THUMBNAIL_SIDE + x) * 3 + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    Feature(SemanticFeature),
    Thumbnail(Thumbnail),
}

impl Reconstruction {
    pub fn values(&self) -> &[f64] {
        match self {
            Reconstruction::Feature(f) => &f.values,
            Reconstruction::Thumbnail(t) => t.data(),
        }
    }

    pub fn into_feature(self) -> Option<SemanticFeature> {
        match self {
            Reconstruction::Feature(f) => Some(f),
            Reconstruction::Thumbnail(_) => None,
        }
    }
}

/// Per-sample terms of the rate–distortion objective.
#[derive(Debug, Clone)]
pub struct SampleLoss {
    pub loss: f64,
    pub rate_bits: f64,
    pub distortion: f64,
    pub grads: Grads,
}

/// Objective weights: `R + λ·D` with cosine weight `alpha` for feature
/// layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCodec {
    arch: CodecArch,
    encoder: Network,
    context: Option<Network>,
    decoder: Network,
    density: FactorizedDensity,
    medians: Option<Vec<i32>>,
    tables: Option<PmfTable>,
    latent: usize,
    output: usize,
    condition: Option<usize>,
}

impl LayerCodec {
    /// Randomly initialized codec; `seed` fixes every initial weight.
    pub fn new(arch: CodecArch, seed: u64) -> Result<Self, CodecError> {
        let (latent, output, condition) = arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Network::new(arch.encoder.clone(), "encoder", &mut rng)?;
        let context = arch.context.clone().map(|s| Network::new(s, "context", &mut rng)).transpose()?;
        let decoder = Network::new(arch.decoder.clone(), "decoder", &mut rng)?;
        let density = FactorizedDensity::new(latent, "density");
        Ok(LayerCodec {
            arch,
            encoder,
            context,
            decoder,
            density,
            medians: None,
            tables: None,
            latent,
            output,
            condition,
        })
    }

    /// Rebuilds a codec from a layout and a flat parameter list in
    /// [`Parameterized::params`] order.
    pub fn from_params(arch: CodecArch, params: Vec<Param>) -> Result<Self, CodecError> {
        let mut codec = LayerCodec::new(arch, 0)?;
        let slots = codec.params_mut();
        if slots.len() != params.len() {
            return Err(CodecError::Arch(format!("expected {} parameter tensors, got {}", slots.len(), params.len())));
        }
        for (slot, p) in slots.into_iter().zip(params) {
            if slot.name != p.name || slot.shape != p.shape {
                return Err(CodecError::Arch(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    p.name, p.shape, slot.name, slot.shape
                )));
            }
            *slot = p;
        }
        Ok(codec)
    }

    pub fn layer(&self) -> LayerId {
        self.arch.layer
    }

    pub fn arch(&self) -> &CodecArch {
        &self.arch
    }

    pub fn latent_width(&self) -> usize {
        self.latent
    }

    pub fn output_width(&self) -> usize {
        self.output
    }

    /// Width of the label feature the caption decoder is conditioned on.
    pub fn condition_width(&self) -> Option<usize> {
        self.condition
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.encoder.input_shape
    }

    pub fn density(&self) -> &FactorizedDensity {
        &self.density
    }

    pub fn medians(&self) -> Option<&[i32]> {
        self.medians.as_deref()
    }

    pub fn tables(&self) -> Option<&PmfTable> {
        self.tables.as_ref()
    }

    /// Sets per-channel medians and rebuilds the probability tables.
    pub fn set_medians(&mut self, medians: Vec<i32>) -> Result<(), CodecError> {
        let table = build_pmf_table(&self.density, &medians)?;
        self.medians = Some(medians);
        self.tables = Some(table);
        Ok(())
    }

    /// Installs tables read from storage without rebuilding them.
    pub fn set_tables(&mut self, medians: Vec<i32>, tables: PmfTable) -> Result<(), CodecError> {
        if medians.len() != self.latent || tables.len() != self.latent {
            return Err(CodecError::Shape(format!(
                "{} medians and {} tables for {} channels",
                medians.len(),
                tables.len(),
                self.latent
            )));
        }
        self.medians = Some(medians);
        self.tables = Some(tables);
        Ok(())
    }

    /// Drops tables, e.g. after the density changed.
    pub fn clear_tables(&mut self) {
        self.medians = None;
        self.tables = None;
    }

    /// Eval-mode latent of a preprocessed signal.
    pub fn encode_latent(&self, signal: &Tensor) -> Result<Vec<f64>, CodecError> {
        Ok(self.encoder.infer(signal, None)?.into_data())
    }

    pub fn quantize(&self, latent: &[f64]) -> Result<QuantizedCode, CodecError> {
        Ok(QuantizedCode { layer: self.layer(), symbols: quantize(latent)? })
    }

    pub fn encode(&self, signal: &Tensor) -> Result<QuantizedCode, CodecError> {
        self.quantize(&self.encode_latent(signal)?)
    }

    fn context_vector(&self, condition: Option<&SemanticFeature>) -> Result<Option<Vec<f64>>, CodecError> {
        match (&self.context, condition) {
            (None, None) => Ok(None),
            (None, Some(_)) => Err(CodecError::UnexpectedCondition(self.layer())),
            (Some(_), None) => Err(CodecError::MissingCondition),
            (Some(net), Some(c)) => {
                if c.level != LayerId::Label {
                    return Err(CodecError::MissingCondition);
                }
                Ok(Some(net.infer(&Tensor::vector(c.values.clone()), None)?.into_data()))
            }
        }
    }

    fn wrap(&self, values: Vec<f64>) -> Result<Reconstruction, CodecError> {
        match self.layer() {
            LayerId::Thumbnail => Ok(Reconstruction::Thumbnail(Thumbnail::new(values)?)),
            level => Ok(Reconstruction::Feature(SemanticFeature { level, values })),
        }
    }

    /// Decodes dequantized symbols. The caption layer requires the decoded
    /// label feature as `condition`.
    pub fn decode(
        &self,
        code: &QuantizedCode,
        condition: Option<&SemanticFeature>,
    ) -> Result<Reconstruction, CodecError> {
        if code.layer != self.layer() {
            return Err(CodecError::WrongLayer { expected: self.layer(), found: code.layer });
        }
        if code.symbols.len() != self.latent {
            return Err(CodecError::Shape(format!("{} symbols for latent width {}", code.symbols.len(), self.latent)));
        }
        let ctx = self.context_vector(condition)?;
        let y: Vec<f64> = code.symbols.iter().map(|&s| s as f64).collect();
        let out = self.decoder.infer(&Tensor::vector(y), ctx.as_deref())?;
        self.wrap(out.into_data())
    }

    /// Signal → quantized, clamped, range-coded payload.
    pub fn compress(&self, signal: &Tensor) -> Result<Vec<u8>, CodecError> {
        let tables = self.tables.as_ref().ok_or(CodecError::NoTables)?;
        let code = self.encode(signal)?;
        let (symbols, moved) = tables.clamp(&code.symbols);
        if moved > 0 {
            log::debug!("layer {}: clamped {moved} symbols into table support", self.layer());
        }
        Ok(range_encode(&QuantizedCode { layer: code.layer, symbols }, tables)?)
    }

    pub fn decompress_code(&self, payload: &[u8]) -> Result<QuantizedCode, CodecError> {
        let tables = self.tables.as_ref().ok_or(CodecError::NoTables)?;
        Ok(range_decode(payload, tables, self.layer(), self.latent)?)
    }

    pub fn decompress(
        &self,
        payload: &[u8],
        condition: Option<&SemanticFeature>,
    ) -> Result<Reconstruction, CodecError> {
        self.decode(&self.decompress_code(payload)?, condition)
    }

    /// Estimated payload size in bits of `code` under the density.
    pub fn estimate_bits(&self, code: &QuantizedCode) -> f64 {
        let v: Vec<f64> = code.symbols.iter().map(|&s| s as f64).collect();
        self.density.rate_bits(&v)
    }

    /// Loss and parameter gradients for one training sample under the
    /// additive-noise surrogate. `condition` is the label feature for the
    /// caption layer. Dropout and noise draw from `rng`.
    pub fn sample_loss<R: Rng + ?Sized>(
        &self,
        signal: &Tensor,
        target: &[f64],
        condition: Option<&[f64]>,
        weights: LossWeights,
        rng: &mut R,
    ) -> Result<SampleLoss, CodecError> {
        if target.len() != self.output {
            return Err(CodecError::Shape(format!("target width {} != output width {}", target.len(), self.output)));
        }
        let (y, enc_tape) = self.encoder.forward(signal, None, Mode::Train, rng)?;
        let noisy = add_uniform_noise(y.data(), rng);
        let (rate_bits, rate_back) = self.density.rate_bits_backward(&noisy, 1.0);

        let ctx = match (&self.context, condition) {
            (None, None) => None,
            (None, Some(_)) => return Err(CodecError::UnexpectedCondition(self.layer())),
            (Some(_), None) => return Err(CodecError::MissingCondition),
            (Some(net), Some(c)) => Some(net.forward(&Tensor::vector(c.to_vec()), None, Mode::Train, rng)?),
        };
        let ctx_vec = ctx.as_ref().map(|(t, _)| t.data());
        let (z_hat, dec_tape) = self.decoder.forward(&Tensor::vector(noisy), ctx_vec, Mode::Train, rng)?;
        let (dist, dist_grad) = distortion_grad(self.layer(), target, z_hat.data(), weights.alpha)?;
        let loss = rd_loss(rate_bits, dist, weights.lambda);

        let scaled: Vec<f64> = dist_grad.iter().map(|g| g * weights.lambda).collect();
        let dec_back = self.decoder.backward(&dec_tape, &scaled)?;
        let latent_grad: Vec<f64> = dec_back.input_grad.iter().zip(&rate_back.input_grad).map(|(a, b)| a + b).collect();
        let enc_back = self.encoder.backward(&enc_tape, &latent_grad)?;
        let mut parts = vec![enc_back.grads];
        if let (Some(net), Some((_, tape))) = (&self.context, &ctx) {
            let cg = dec_back.context_grad.as_deref().unwrap_or(&[]);
            parts.push(net.backward(tape, cg)?.grads);
        }
        parts.push(dec_back.grads);
        parts.push(rate_back.grads);
        Ok(SampleLoss { loss, rate_bits, distortion: dist, grads: Grads::concat(parts) })
    }
}

impl Parameterized for LayerCodec {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        if let Some(c) = &self.context {
            v.extend(c.params());
        }
        v.extend(self.decoder.params());
        v.extend(self.density.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        if let Some(c) = &mut self.context {
            v.extend(c.params_mut());
        }
        v.extend(self.decoder.params_mut());
        v.extend(self.density.params_mut());
        v
    }
}

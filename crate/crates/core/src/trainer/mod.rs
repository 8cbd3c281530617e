//! Rate–distortion training with validation-based model selection.
//!
//! Every step draws a mini-batch, computes per-sample gradients of
//! `R + λ·D` under the additive-noise surrogate (in parallel when enabled),
//! sums them in batch order, averages, clips the global norm and applies
//! Adam. Each sample's dropout masks and noise come from a generator keyed
//! by `(seed, epoch, position)`, so results do not depend on thread count.
//! After every epoch the model is scored on the validation split with hard
//! rounding; the best epoch is kept. Its latents on the training split give
//! the per-channel medians that centre the coding tables.

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointMeta};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::Thumbnail;
use crate::codec::{distortion, ArchScale, LayerCodec, LayerId, LossWeights, SemanticFeature, DEFAULT_COSINE_WEIGHT};
use crate::data_io::{BrainSignal, DatasetManifest, Split};
use crate::entropy::QuantizedCode;
use crate::neural::{Adam, AdamConfig, Grads, Parameterized};
use crate::par::Exec;
use crate::retrieval::EmbeddingDatabase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("caption layer training needs a trained label-layer checkpoint")]
    MissingCondition,
    #[error("targets do not match the data: {0}")]
    Misaligned(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    LabelDb,
    CaptionDb,
    Thumbnails,
}

impl TargetSource {
    pub fn for_layer(layer: LayerId) -> Self {
        match layer {
            LayerId::Label => TargetSource::LabelDb,
            LayerId::Caption => TargetSource::CaptionDb,
            LayerId::Thumbnail => TargetSource::Thumbnails,
        }
    }
}

fn default_epochs() -> usize {
    150
}
fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.99
}
fn default_clip() -> f64 {
    10.0
}
fn default_alpha() -> f64 {
    DEFAULT_COSINE_WEIGHT
}
fn default_scale() -> ArchScale {
    ArchScale::paper()
}

/// Training settings; the JSON form uses the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layer: LayerId,
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub seed: u64,
    pub target_source: TargetSource,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_scale")]
    pub arch: ArchScale,
}

impl TrainConfig {
    /// Defaults for `layer`: λ = 4·10⁴ for label and thumbnail, 40 for
    /// caption.
    pub fn new(layer: LayerId) -> Self {
        let lambda = if layer == LayerId::Caption { 40.0 } else { 4e4 };
        TrainConfig {
            layer,
            lambda,
            alpha: default_alpha(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            seed: 0,
            target_source: TargetSource::for_layer(layer),
            clip_norm: default_clip(),
            arch: default_scale(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip norm must be positive".into());
        }
        if self.target_source != TargetSource::for_layer(self.layer) {
            return bad(format!("layer {} cannot train on {:?}", self.layer, self.target_source));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda: self.lambda, alpha: self.alpha }
    }

    /// First 16 hex digits of SHA-256 over the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Where each record's regression target comes from.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Label embedding of the record's class.
    Labels(&'a EmbeddingDatabase),
    /// Caption embedding keyed by record index.
    Captions(&'a EmbeddingDatabase),
    /// Thumbnail per record index.
    Thumbnails(&'a [Thumbnail]),
}

impl<'a> Targets<'a> {
    pub fn source(&self) -> TargetSource {
        match self {
            Targets::Labels(_) => TargetSource::LabelDb,
            Targets::Captions(_) => TargetSource::CaptionDb,
            Targets::Thumbnails(_) => TargetSource::Thumbnails,
        }
    }

    pub fn target(&self, index: usize, signal: &BrainSignal) -> Result<&'a [f64], TrainError> {
        match *self {
            Targets::Labels(db) => db
                .embedding(signal.class_id)
                .map_err(|_| TrainError::Misaligned(format!("no label embedding for class {}", signal.class_id))),
            Targets::Captions(db) => db
                .embedding(index as u32)
                .map_err(|_| TrainError::Misaligned(format!("no caption embedding for record {index}"))),
            Targets::Thumbnails(t) => t
                .get(index)
                .map(|t| t.data())
                .ok_or_else(|| TrainError::Misaligned(format!("no thumbnail for record {index}"))),
        }
    }

    fn width(&self) -> usize {
        match self {
            Targets::Labels(db) | Targets::Captions(db) => db.dim(),
            Targets::Thumbnails(_) => crate::codec::THUMBNAIL_LEN,
        }
    }
}

/// Records and their train/validation membership.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub signals: &'a [BrainSignal],
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl<'a> TrainingData<'a> {
    pub fn from_manifest(signals: &'a [BrainSignal], manifest: &DatasetManifest) -> Self {
        TrainingData { signals, train: manifest.indices(Split::Train), val: manifest.indices(Split::Val) }
    }
}

/// Label-level feature the caption decoder is conditioned on: the label
/// codec's hard-quantized (and, with tables, clamped) reconstruction.
pub fn label_condition(label_codec: &LayerCodec, signal: &BrainSignal) -> crate::Result<SemanticFeature> {
    let mut code = label_codec.encode(&signal.to_tensor())?;
    if let Some(t) = label_codec.tables() {
        code.symbols = t.clamp(&code.symbols).0;
    }
    let feature = label_codec
        .decode(&code, None)?
        .into_feature()
        .ok_or_else(|| TrainError::Config("conditioning codec is not a label codec".into()))?;
    Ok(feature)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rate_bits: f64,
    pub distortion: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_rate_bits: f64,
    pub train_distortion: f64,
    pub train_loss: f64,
    pub val: ValidationReport,
    pub clipped_steps: usize,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} rate={:.4} distortion={:.6} loss={:.4} val_rate={:.4} val_distortion={:.6} val_loss={:.4} clipped={}",
            self.epoch,
            self.train_rate_bits,
            self.train_distortion,
            self.train_loss,
            self.val.rate_bits,
            self.val.distortion,
            self.val.loss,
            self.clipped_steps
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn sample_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | position as u64);
    rng
}

struct Prepared<'a> {
    targets: Vec<&'a [f64]>,
    conditions: Vec<Option<Vec<f64>>>,
}

fn prepare<'a>(
    layer: LayerId,
    signals: &[BrainSignal],
    targets: &Targets<'a>,
    condition: Option<&LayerCodec>,
    exec: Exec,
) -> crate::Result<Prepared<'a>> {
    let tgt = signals.iter().enumerate().map(|(i, s)| targets.target(i, s)).collect::<Result<Vec<_>, _>>()?;
    let conditions = match (layer, condition) {
        (LayerId::Caption, Some(c)) => {
            if c.layer() != LayerId::Label {
                return Err(TrainError::Config("caption layer must be conditioned on a label codec".into()).into());
            }
            exec.try_map(signals, |_, s| label_condition(c, s).map(|f| Some(f.values)))?
        }
        (LayerId::Caption, None) => return Err(TrainError::MissingCondition.into()),
        _ => vec![None; signals.len()],
    };
    Ok(Prepared { targets: tgt, conditions })
}

fn check_shapes(codec: &LayerCodec, signals: &[BrainSignal], targets: &Targets) -> Result<(), TrainError> {
    if targets.width() != codec.output_width() {
        return Err(TrainError::Misaligned(format!(
            "target width {} but the decoder outputs {}",
            targets.width(),
            codec.output_width()
        )));
    }
    let want = codec.input_shape();
    if let Some(s) = signals.iter().find(|s| [s.channels(), s.samples()] != want) {
        return Err(TrainError::Misaligned(format!(
            "signal shape {}×{} but the encoder expects {want:?}",
            s.channels(),
            s.samples()
        )));
    }
    Ok(())
}

fn evaluate(
    codec: &LayerCodec,
    signals: &[BrainSignal],
    indices: &[usize],
    prep: &Prepared,
    weights: LossWeights,
    exec: Exec,
) -> crate::Result<ValidationReport> {
    if indices.is_empty() {
        return Err(TrainError::EmptySplit("validation").into());
    }
    let per = exec.try_map(indices, |_, &i| -> crate::Result<(f64, f64)> {
        let code = codec.encode(&signals[i].to_tensor())?;
        let rate = codec.estimate_bits(&code);
        let cond = prep.conditions[i].as_ref().map(|v| SemanticFeature { level: LayerId::Label, values: v.clone() });
        let out = codec.decode(&code, cond.as_ref())?;
        let d = distortion(codec.layer(), prep.targets[i], out.values(), weights.alpha)?;
        Ok((rate, d))
    })?;
    let n = per.len() as f64;
    let rate_bits = per.iter().map(|p| p.0).sum::<f64>() / n;
    let dist = per.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(ValidationReport { rate_bits, distortion: dist, loss: rate_bits + weights.lambda * dist })
}

/// Eval-mode scores (hard rounding, no noise, no dropout) on `indices`.
pub fn validate(
    codec: &LayerCodec,
    signals: &[BrainSignal],
    indices: &[usize],
    targets: &Targets,
    condition: Option<&LayerCodec>,
    weights: LossWeights,
    exec: Exec,
) -> crate::Result<ValidationReport> {
    if targets.source() != TargetSource::for_layer(codec.layer()) {
        return Err(TrainError::Misaligned(format!(
            "layer {} cannot be scored on {:?}",
            codec.layer(),
            targets.source()
        ))
        .into());
    }
    check_shapes(codec, signals, targets)?;
    let prep = prepare(codec.layer(), signals, targets, condition, exec)?;
    evaluate(codec, signals, indices, &prep, weights, exec)
}

/// Rounded per-channel median of eval-mode latents over `indices`.
pub fn channel_medians(
    codec: &LayerCodec,
    signals: &[BrainSignal],
    indices: &[usize],
    exec: Exec,
) -> crate::Result<Vec<i32>> {
    if indices.is_empty() {
        return Err(TrainError::EmptySplit("training").into());
    }
    let latents = exec.try_map(indices, |_, &i| codec.encode_latent(&signals[i].to_tensor()))?;
    let medians = (0..codec.latent_width())
        .map(|c| {
            let mut col: Vec<f64> = latents.iter().map(|l| l[c]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let m = if n % 2 == 1 { col[n / 2] } else { 0.5 * (col[n / 2 - 1] + col[n / 2]) };
            m.round() as i32
        })
        .collect();
    Ok(medians)
}

/// Trains one layer codec and returns the best-validation checkpoint with
/// coding tables attached. `condition` must be the trained label codec when
/// training the caption layer; it stays frozen.
pub fn train_layer(
    config: &TrainConfig,
    data: &TrainingData,
    targets: &Targets,
    condition: Option<&LayerCodec>,
    exec: Exec,
) -> crate::Result<TrainOutcome> {
    config.validate()?;
    if targets.source() != config.target_source {
        return Err(TrainError::Misaligned(format!(
            "config expects {:?} targets, got {:?}",
            config.target_source,
            targets.source()
        ))
        .into());
    }
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit("training").into());
    }
    if data.val.is_empty() {
        return Err(TrainError::EmptySplit("validation").into());
    }
    if let Some(&i) = data.train.iter().chain(&data.val).find(|&&i| i >= data.signals.len()) {
        return Err(TrainError::Misaligned(format!("split refers to record {i} of {}", data.signals.len())).into());
    }
    let mut codec = LayerCodec::new(config.arch.arch(config.layer), config.seed)?;
    check_shapes(&codec, data.signals, targets)?;
    let prep = prepare(config.layer, data.signals, targets, condition, exec)?;
    let weights = config.weights();
    let mut adam = Adam::new(
        AdamConfig { lr: config.lr, beta1: config.beta1, beta2: config.beta2, ..AdamConfig::default() },
        &codec.params(),
    )?;
    let config_hash = config.hash();

    let mut best: Option<(LayerCodec, usize, ValidationReport)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order = data.train.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut sample_rng(config.seed, epoch, usize::MAX >> 32));
        let (mut rate_sum, mut dist_sum, mut loss_sum, mut clipped) = (0.0, 0.0, 0.0, 0);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let base = b * config.batch_size;
            let results = exec.try_map(batch, |k, &i| {
                let mut rng = sample_rng(config.seed, epoch, base + k);
                codec.sample_loss(
                    &data.signals[i].to_tensor(),
                    prep.targets[i],
                    prep.conditions[i].as_deref(),
                    weights,
                    &mut rng,
                )
            })?;
            let mut grads = Grads::zeros_like(&codec.params());
            for r in &results {
                grads.add_assign(&r.grads);
                rate_sum += r.rate_bits;
                dist_sum += r.distortion;
                loss_sum += r.loss;
            }
            grads.scale(1.0 / batch.len() as f64);
            if !grads.is_finite() {
                return Err(TrainError::Diverged(format!("non-finite gradient in epoch {epoch}")).into());
            }
            if let Some(norm) = grads.clip_global_norm(config.clip_norm) {
                clipped += 1;
                log::debug!("epoch {epoch} step {b}: clipped gradient norm {norm:.3} to {}", config.clip_norm);
            }
            adam.step(&mut codec.params_mut(), &grads)?;
        }
        let n = order.len() as f64;
        let val = evaluate(&codec, data.signals, &data.val, &prep, weights, exec)?;
        let log = EpochLog {
            epoch,
            train_rate_bits: rate_sum / n,
            train_distortion: dist_sum / n,
            train_loss: loss_sum / n,
            val,
            clipped_steps: clipped,
        };
        log::info!("layer {} {log}", config.layer);
        history.push(log);
        if !val.loss.is_finite() {
            return Err(TrainError::Diverged(format!("validation loss is {} in epoch {epoch}", val.loss)).into());
        }
        if best.as_ref().is_none_or(|(_, _, b)| val.loss < b.loss) {
            best = Some((codec.clone(), epoch, val));
        }
    }
    let (mut selected, epoch, val) = best.expect("at least one epoch ran");
    selected.snap_to_f32();
    let medians = channel_medians(&selected, data.signals, &data.train, exec)?;
    selected.set_medians(medians)?;
    let checkpoint = Checkpoint {
        codec: selected,
        meta: CheckpointMeta {
            epoch,
            val_loss: val.loss,
            val_rate_bits: val.rate_bits,
            val_distortion: val.distortion,
            config_hash,
            config: config.clone(),
        },
    };
    Ok(TrainOutcome { checkpoint, history })
}

/// Codes and rates of `indices` under a finished checkpoint.
pub fn encode_records(
    codec: &LayerCodec,
    signals: &[BrainSignal],
    indices: &[usize],
    exec: Exec,
) -> crate::Result<Vec<(QuantizedCode, Vec<u8>)>> {
    exec.try_map(indices, |_, &i| -> crate::Result<_> {
        let x = signals[i].to_tensor();
        let payload = codec.compress(&x)?;
        let code = codec.decompress_code(&payload)?;
        Ok((code, payload))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{synthesize_dataset, synthesize_targets, SyntheticSpec};

    fn tiny() -> (Vec<BrainSignal>, DatasetManifest) {
        synthesize_dataset(&SyntheticSpec {
            n_classes: 2,
            records_per_class: 6,
            channels: 4,
            samples: 32,
            sample_rate_hz: 1000,
            noise_sigma: 0.5,
            seed: 1,
        })
        .unwrap()
    }

    fn config(layer: LayerId) -> TrainConfig {
        let mut c = TrainConfig::new(layer);
        c.arch = ArchScale::compact(4, 32);
        c.epochs = 3;
        c.batch_size = 4;
        c.lr = 1e-3;
        c
    }

    #[test]
    fn defaults_and_validation() {
        let c = TrainConfig::new(LayerId::Label);
        assert_eq!(
            (c.epochs, c.batch_size, c.lr, c.beta1, c.beta2, c.lambda, c.alpha),
            (150, 16, 1e-4, 0.9, 0.99, 4e4, 4.0)
        );
        assert_eq!(TrainConfig::new(LayerId::Caption).lambda, 40.0);
        let mut z = c.clone();
        z.epochs = 0;
        assert!(z.validate().is_err());
        let mut z = c.clone();
        z.lambda = 0.0;
        assert!(z.validate().is_err());
        let mut z = c.clone();
        z.target_source = TargetSource::Thumbnails;
        assert!(z.validate().is_err());
        let json = r#"{"layer":"label","lambda":400,"target_source":"label_db"}"#;
        let parsed: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.lambda, 400.0);
        assert_eq!(parsed.epochs, 150);
        assert_eq!(parsed.hash().len(), 16);
        assert_ne!(parsed.hash(), c.hash());
    }

    #[test]
    fn training_is_deterministic_and_reloadable() {
        let (s, m) = tiny();
        let t = synthesize_targets(&s, &m, 64, 32, 2).unwrap();
        let data = TrainingData::from_manifest(&s, &m);
        let cfg = config(LayerId::Label);
        let a = train_layer(&cfg, &data, &Targets::Labels(&t.labels), None, Exec::Parallel).unwrap();
        let b = train_layer(&cfg, &data, &Targets::Labels(&t.labels), None, Exec::Sequential).unwrap();
        assert_eq!(a.checkpoint.codec, b.checkpoint.codec);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|h| h.val.distortion >= 0.0));
        let best = a.history.iter().map(|h| h.val.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.checkpoint.meta.val_loss, best);

        let mut bytes = Vec::new();
        a.checkpoint.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.codec, a.checkpoint.codec);
        for r in &s {
            let x = r.to_tensor();
            assert_eq!(back.codec.compress(&x).unwrap(), a.checkpoint.codec.compress(&x).unwrap());
        }
        let w = cfg.weights();
        let v1 = validate(&back.codec, &s, &data.val, &Targets::Labels(&t.labels), None, w, Exec::Parallel).unwrap();
        let v2 = validate(&back.codec, &s, &data.val, &Targets::Labels(&t.labels), None, w, Exec::Sequential).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn caption_layer_needs_condition() {
        let (s, m) = tiny();
        let t = synthesize_targets(&s, &m, 64, 32, 2).unwrap();
        let data = TrainingData::from_manifest(&s, &m);
        let err = train_layer(&config(LayerId::Caption), &data, &Targets::Captions(&t.captions), None, Exec::Parallel)
            .unwrap_err();
        assert!(matches!(err, crate::Error::Train(TrainError::MissingCondition)));
        let mut one = config(LayerId::Label);
        one.epochs = 1;
        let label = train_layer(&one, &data, &Targets::Labels(&t.labels), None, Exec::Parallel).unwrap();
        let mut cap = config(LayerId::Caption);
        cap.epochs = 1;
        let out =
            train_layer(&cap, &data, &Targets::Captions(&t.captions), Some(&label.checkpoint.codec), Exec::Parallel)
                .unwrap();
        assert_eq!(out.checkpoint.codec.layer(), LayerId::Caption);
    }

    #[test]
    fn misaligned_targets_are_rejected() {
        let (s, m) = tiny();
        let t = synthesize_targets(&s, &m, 64, 32, 2).unwrap();
        let data = TrainingData::from_manifest(&s, &m);
        assert!(
            train_layer(&config(LayerId::Label), &data, &Targets::Captions(&t.captions), None, Exec::Parallel).is_err()
        );
        let few = &t.thumbnails[..3];
        assert!(
            train_layer(&config(LayerId::Thumbnail), &data, &Targets::Thumbnails(few), None, Exec::Parallel).is_err()
        );
        let wrong_width = synthesize_targets(&s, &m, 32, 32, 2).unwrap();
        assert!(train_layer(
            &config(LayerId::Label),
            &data,
            &Targets::Labels(&wrong_width.labels),
            None,
            Exec::Parallel
        )
        .is_err());
    }

    #[test]
    fn large_lambda_overfits_one_record() {
        let (s, m) = tiny();
        let t = synthesize_targets(&s, &m, 64, 32, 2).unwrap();
        let data = TrainingData { signals: &s, train: vec![0], val: vec![0] };
        let mut cfg = config(LayerId::Label);
        cfg.lambda = 1e8;
        cfg.epochs = 60;
        cfg.batch_size = 1;
        cfg.arch.dropout = 0.0;
        let untrained = LayerCodec::new(cfg.arch.arch(LayerId::Label), cfg.seed).unwrap();
        let w = cfg.weights();
        let targets = Targets::Labels(&t.labels);
        let before = validate(&untrained, &s, &[0], &targets, None, w, Exec::Parallel).unwrap();
        let out = train_layer(&cfg, &data, &targets, None, Exec::Parallel).unwrap();
        let after = validate(&out.checkpoint.codec, &s, &[0], &targets, None, w, Exec::Parallel).unwrap();
        assert!(after.distortion < before.distortion, "{after:?} vs {before:?}");
        assert!(after.loss < before.loss);
    }
}

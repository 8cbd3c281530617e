//! Task metrics: top-1 accuracy with confusion matrix, BLEU-n, ROUGE-1,
//! SSIM, prompt fusion, and rate–accuracy sweeps.
//!
//! Text metrics work on tokens produced by [`tokenize`]: Unicode lowercase,
//! split on runs of non-alphanumeric characters. BLEU is the unsmoothed
//! single-reference form.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{LayerCodec, LayerId, Thumbnail, THUMBNAIL_SIDE};
use crate::data_io::BrainSignal;
use crate::par::Exec;
use crate::retrieval::EmbeddingDatabase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("n-gram order must be in 1..=4, got {0}")]
    Order(usize),
    #[error("image shape mismatch or too small for an 8x8 window: {0}")]
    Shape(String),
    #[error("both label and caption text are empty")]
    EmptyPrompt,
    #[error("a sweep needs at least two lambda values, got {0}")]
    TooFewLambdas(usize),
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Sorted class ids; row and column `i` refer to `classes[i]`.
    pub classes: Vec<u32>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class_id: u32) -> Option<u64> {
        let i = self.classes.binary_search(&class_id).ok()?;
        Some(self.counts[i].iter().sum())
    }
}

/// Fraction of exact matches together with the confusion matrix over the
/// union of observed classes.
pub fn top1_accuracy(predictions: &[u32], truths: &[u32]) -> Result<(f64, ConfusionMatrix), MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::Length { left: predictions.len(), right: truths.len() });
    }
    if truths.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut classes: Vec<u32> = predictions.iter().chain(truths).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let index: HashMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (p, t) in predictions.iter().zip(truths) {
        counts[index[t]][index[p]] += 1;
    }
    let matrix = ConfusionMatrix { classes, counts };
    let accuracy = matrix.trace() as f64 / matrix.total() as f64;
    Ok((accuracy, matrix))
}

fn ngram_counts(tokens: &[String], k: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(k) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Geometric mean of clipped k-gram precisions for k = 1..=n times the
/// brevity penalty. Any zero precision gives 0, as does an empty candidate.
pub fn bleu_n(candidate: &[String], reference: &[String], n: usize) -> Result<f64, MetricError> {
    if !(1..=4).contains(&n) {
        return Err(MetricError::Order(n));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let cand = ngram_counts(candidate, k);
        let refs = ngram_counts(reference, k);
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(brevity * (log_sum / n as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn rouge1(candidate: &[String], reference: &[String]) -> Rouge {
    let cand = ngram_counts(candidate, 1);
    let refs = ngram_counts(reference, 1);
    let overlap: usize = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    let ratio = |den: usize| if den == 0 { 0.0 } else { overlap as f64 / den as f64 };
    let (precision, recall) = (ratio(candidate.len()), ratio(reference.len()));
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Rouge { precision, recall, f1 }
}

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// SSIM of two interleaved `height × width × channels` images with values
/// in `[0, 1]`: uniform 8×8 windows at stride 1, sample (n − 1) variances,
/// averaged over all windows and channels.
pub fn ssim_image(a: &[f64], b: &[f64], height: usize, width: usize, channels: usize) -> Result<f64, MetricError> {
    let len = height * width * channels;
    if a.len() != len || b.len() != len || height < SSIM_WINDOW || width < SSIM_WINDOW || channels == 0 {
        return Err(MetricError::Shape(format!("{}/{} values for {height}x{width}x{channels}", a.len(), b.len())));
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let at = |img: &[f64], y: usize, x: usize, c: usize| img[(y * width + x) * channels + c];
    let mut total = 0.0;
    let mut windows = 0usize;
    for c in 0..channels {
        for y0 in 0..=height - SSIM_WINDOW {
            for x0 in 0..=width - SSIM_WINDOW {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + SSIM_WINDOW {
                    for x in x0..x0 + SSIM_WINDOW {
                        let (va, vb) = (at(a, y, x, c), at(b, y, x, c));
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let var_a = (saa - n * ma * ma) / (n - 1.0);
                let var_b = (sbb - n * mb * mb) / (n - 1.0);
                let cov = (sab - n * ma * mb) / (n - 1.0);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

pub fn ssim(a: &Thumbnail, b: &Thumbnail) -> f64 {
    ssim_image(a.data(), b.data(), THUMBNAIL_SIDE, THUMBNAIL_SIDE, 3).expect("thumbnails have a fixed shape")
}

const STOPWORDS: [&str; 30] = [
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "and", "or", "is", "are", "was", "were", "be", "by",
    "from", "as", "it", "its", "this", "that", "these", "those", "there", "some", "into", "over",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSource {
    Label,
    Caption,
}

/// Picks the caption when it shares a non-stopword token with the label and
/// the label otherwise. An empty text always loses to a non-empty one.
pub fn fuse_prompt<'a>(label: &'a str, caption: &'a str) -> Result<(&'a str, PromptSource), MetricError> {
    let content =
        |t: &str| -> Vec<String> { tokenize(t).into_iter().filter(|w| !STOPWORDS.contains(&w.as_str())).collect() };
    match (label.trim().is_empty(), caption.trim().is_empty()) {
        (true, true) => Err(MetricError::EmptyPrompt),
        (true, false) => Ok((caption, PromptSource::Caption)),
        (false, true) => Ok((label, PromptSource::Label)),
        (false, false) => {
            let label_words = content(label);
            if content(caption).iter().any(|w| label_words.contains(w)) {
                Ok((caption, PromptSource::Caption))
            } else {
                Ok((label, PromptSource::Label))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub record_index: usize,
    pub candidate: String,
    pub reference: String,
}

pub fn load_caption_pairs(path: &Path) -> crate::Result<Vec<CaptionPair>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CaptionScores {
    pub bleu: [f64; 4],
    pub rouge1: Rouge,
}

/// Corpus scores as the mean of per-pair scores.
pub fn caption_scores(pairs: &[CaptionPair]) -> Result<CaptionScores, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut scores = CaptionScores::default();
    for pair in pairs {
        let (c, r) = (tokenize(&pair.candidate), tokenize(&pair.reference));
        for (n, slot) in scores.bleu.iter_mut().enumerate() {
            *slot += bleu_n(&c, &r, n + 1)?;
        }
        let rg = rouge1(&c, &r);
        scores.rouge1.precision += rg.precision;
        scores.rouge1.recall += rg.recall;
        scores.rouge1.f1 += rg.f1;
    }
    let m = pairs.len() as f64;
    scores.bleu.iter_mut().for_each(|b| *b /= m);
    scores.rouge1.precision /= m;
    scores.rouge1.recall /= m;
    scores.rouge1.f1 /= m;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubjectReport {
    pub records: usize,
    pub top1: Option<f64>,
    pub bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: usize,
    /// Payload bits per signal sample, per layer.
    pub bps: BTreeMap<LayerId, f64>,
    /// Whole-container bits per signal sample, headers included.
    pub total_bps: Option<f64>,
    pub top1: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub captions: Option<CaptionScores>,
    pub mean_ssim: Option<f64>,
    pub per_subject: BTreeMap<u32, SubjectReport>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Outcome of running the label codec and retrieval over a set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEvaluation {
    pub indices: Vec<usize>,
    pub predictions: Vec<u32>,
    pub truths: Vec<u32>,
    pub subjects: Vec<u32>,
    pub payload_bits: Vec<u64>,
    /// Samples per signal (channels × time samples).
    pub samples: Vec<u64>,
}

impl LabelEvaluation {
    pub fn bps(&self) -> f64 {
        let bits: u64 = self.payload_bits.iter().sum();
        let samples: u64 = self.samples.iter().sum();
        bits as f64 / samples as f64
    }

    pub fn accuracy(&self) -> Result<f64, MetricError> {
        top1_accuracy(&self.predictions, &self.truths).map(|(a, _)| a)
    }

    /// Fills accuracy, confusion, layer-1 bps and the per-subject breakdown.
    pub fn report(&self) -> Result<MetricReport, MetricError> {
        let (top1, confusion) = top1_accuracy(&self.predictions, &self.truths)?;
        let mut per_subject: BTreeMap<u32, (Vec<u32>, Vec<u32>, u64, u64)> = BTreeMap::new();
        for i in 0..self.indices.len() {
            let e = per_subject.entry(self.subjects[i]).or_default();
            e.0.push(self.predictions[i]);
            e.1.push(self.truths[i]);
            e.2 += self.payload_bits[i];
            e.3 += self.samples[i];
        }
        let per_subject = per_subject
            .into_iter()
            .map(|(s, (p, t, bits, samples))| {
                let acc = top1_accuracy(&p, &t).map(|(a, _)| a)?;
                Ok((s, SubjectReport { records: p.len(), top1: Some(acc), bps: Some(bits as f64 / samples as f64) }))
            })
            .collect::<Result<_, MetricError>>()?;
        Ok(MetricReport {
            records: self.indices.len(),
            bps: BTreeMap::from([(LayerId::Label, self.bps())]),
            top1: Some(top1),
            confusion: Some(confusion),
            per_subject,
            ..MetricReport::default()
        })
    }
}

/// Compresses each record with the label codec, decodes the feature and
/// classifies it against `db`.
pub fn evaluate_labels(
    codec: &LayerCodec,
    db: &EmbeddingDatabase,
    signals: &[BrainSignal],
    indices: &[usize],
    exec: Exec,
) -> crate::Result<LabelEvaluation> {
    if indices.is_empty() {
        return Err(MetricError::Empty.into());
    }
    let rows = exec.try_map(indices, |_, &i| -> crate::Result<_> {
        let signal = &signals[i];
        let payload = codec.compress(&signal.to_tensor())?;
        let feature = codec.decompress(&payload, None)?.into_feature().expect("label layer decodes a feature");
        let prediction = db.classify(&feature.values, 1)?;
        Ok((prediction.class_id, 8 * payload.len() as u64))
    })?;
    Ok(LabelEvaluation {
        indices: indices.to_vec(),
        predictions: rows.iter().map(|r| r.0).collect(),
        truths: indices.iter().map(|&i| signals[i].class_id).collect(),
        subjects: indices.iter().map(|&i| signals[i].subject_id).collect(),
        payload_bits: rows.iter().map(|r| r.1).collect(),
        samples: indices.iter().map(|&i| (signals[i].channels() * signals[i].samples()) as u64).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub lambda: f64,
    pub bps: f64,
    pub accuracy: f64,
}

/// Runs `harness` once per λ (each a fresh training run) and returns the
/// points sorted by bps, ties broken by λ.
pub fn rate_accuracy_sweep<F>(lambdas: &[f64], mut harness: F) -> crate::Result<Vec<RatePoint>>
where
    F: FnMut(f64) -> crate::Result<RatePoint>,
{
    if lambdas.len() < 2 {
        return Err(MetricError::TooFewLambdas(lambdas.len()).into());
    }
    let mut points = lambdas.iter().map(|&l| harness(l)).collect::<crate::Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.bps.total_cmp(&b.bps).then(a.lambda.total_cmp(&b.lambda)));
    Ok(points)
}

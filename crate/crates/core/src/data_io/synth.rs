//! Desk-scale synthetic datasets.
//!
//! Class `c` has a template whose every channel is the sum of two sinusoids
//! at `55 + ((7c + 13k) mod 40)` Hz, `k ∈ {0, 1}`, with phases drawn per
//! class and channel, scaled to unit RMS. A record is its class template
//! plus i.i.d. Gaussian noise, so `noise_sigma = 1` is roughly 0 dB SNR.
//! Records are ordered class by class and subjects are assigned
//! round-robin.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{split_dataset, BrainSignal, DataError, DatasetManifest, SplitRatios};
use crate::codec::{Thumbnail, THUMBNAIL_LEN, THUMBNAIL_SIDE};
use crate::par::Exec;
use crate::retrieval::{EmbeddingDatabase, Entry};

const SUBJECTS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub records_per_class: usize,
    pub channels: usize,
    pub samples: usize,
    pub sample_rate_hz: u32,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_classes == 0 || self.records_per_class == 0 || self.channels == 0 || self.samples == 0 {
            return Err(DataError::Synthetic("counts must be positive".into()));
        }
        if self.n_classes > u16::MAX as usize + 1 {
            return Err(DataError::Synthetic("too many classes".into()));
        }
        if self.sample_rate_hz < 200 {
            return Err(DataError::Synthetic("sample rate must be at least 200 Hz for the 55–95 Hz templates".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(DataError::Synthetic("noise sigma must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn template(spec: &SyntheticSpec, class: usize) -> Vec<f64> {
    let mut rng = rng_for(spec.seed, 1 << 40 | class as u64);
    let freqs = [0, 1].map(|k| 55.0 + ((7 * class + 13 * k) % 40) as f64);
    let rate = spec.sample_rate_hz as f64;
    let mut out = Vec::with_capacity(spec.channels * spec.samples);
    for _ in 0..spec.channels {
        let phases: [f64; 2] = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
        let row: Vec<f64> = (0..spec.samples)
            .map(|t| {
                let time = t as f64 / rate;
                freqs.iter().zip(&phases).map(|(f, p)| (2.0 * PI * f * time + p).sin()).sum()
            })
            .collect();
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64).sqrt();
        out.extend(row.iter().map(|v| if rms > 0.0 { v / rms } else { 0.0 }));
    }
    out
}

fn caption_for(label: &str, record: usize) -> String {
    match record % 4 {
        0 => format!("a photo of a {label}"),
        1 => format!("a {label} sitting on a wooden table"),
        2 => format!("a close up of a {label} in the wild"),
        _ => "a blurry picture of something in a room".to_string(),
    }
}

/// Records plus a manifest with labels `class_<c>`, synthetic captions and,
/// when every class has at least three records, a default 0.8/0.1/0.1 split.
pub fn synthesize_dataset(spec: &SyntheticSpec) -> Result<(Vec<BrainSignal>, DatasetManifest), DataError> {
    spec.validate()?;
    let templates: Vec<Vec<f64>> = Exec::default().map_range(spec.n_classes, |c| template(spec, c));
    let n = spec.n_classes * spec.records_per_class;
    let signals = Exec::default().try_map_range(n, |i| {
        let class = i / spec.records_per_class;
        let mut rng = rng_for(spec.seed, i as u64 + 1);
        let data = templates[class]
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + spec.noise_sigma * z
            })
            .collect();
        BrainSignal::new(spec.channels, spec.samples, data, class as u32, i as u32 % SUBJECTS, spec.sample_rate_hz)
    })?;
    let labels: BTreeMap<u32, String> = (0..spec.n_classes as u32).map(|c| (c, format!("class_{c}"))).collect();
    let captions = signals.iter().enumerate().map(|(i, s)| (i, caption_for(&labels[&s.class_id], i))).collect();
    let split = if spec.records_per_class >= 3 {
        let ids: Vec<u32> = signals.iter().map(|s| s.class_id).collect();
        split_dataset(&ids, SplitRatios::default(), spec.seed)?
    } else {
        BTreeMap::new()
    };
    Ok((signals, DatasetManifest { labels, captions, split }))
}

/// Training targets for synthetic data.
#[derive(Debug, Clone)]
pub struct SyntheticTargets {
    /// Orthonormal label embeddings, one per class.
    pub labels: EmbeddingDatabase,
    /// Caption embeddings keyed by record index.
    pub captions: EmbeddingDatabase,
    /// One thumbnail per record.
    pub thumbnails: Vec<Thumbnail>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Orthonormal label embeddings (Gram–Schmidt on Gaussian draws), caption
/// embeddings scattered around a per-class direction and class-coloured
/// striped thumbnails with per-record noise.
pub fn synthesize_targets(
    signals: &[BrainSignal],
    manifest: &DatasetManifest,
    label_dim: usize,
    caption_dim: usize,
    seed: u64,
) -> crate::Result<SyntheticTargets> {
    let classes: Vec<u32> = manifest.labels.keys().copied().collect();
    if classes.len() > label_dim {
        return Err(DataError::Synthetic(format!(
            "{} classes cannot have orthogonal {label_dim}-dim embeddings",
            classes.len()
        ))
        .into());
    }
    manifest.validate(signals)?;
    let mut rng = rng_for(seed, 1 << 50);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    while basis.len() < classes.len() {
        let mut v = gaussian(&mut rng, label_dim);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            basis.push(normalize(v));
        }
    }
    let labels = EmbeddingDatabase::new(
        label_dim,
        classes
            .iter()
            .zip(basis)
            .map(|(&c, embedding)| Entry { class_id: c, text: manifest.labels[&c].clone(), embedding })
            .collect(),
    )?;

    let class_dirs: BTreeMap<u32, Vec<f64>> =
        classes.iter().map(|&c| (c, normalize(gaussian(&mut rng, caption_dim)))).collect();
    let colours: BTreeMap<u32, ([f64; 3], usize)> =
        classes.iter().map(|&c| (c, ([rng.gen(), rng.gen(), rng.gen()], rng.gen_range(1..6)))).collect();

    let mut captions = Vec::with_capacity(signals.len());
    let mut thumbnails = Vec::with_capacity(signals.len());
    for (i, s) in signals.iter().enumerate() {
        let mut rng = rng_for(seed, (1 << 51) + i as u64);
        let spread = 0.3 / (caption_dim as f64).sqrt();
        let emb = class_dirs[&s.class_id].iter().map(|d| d + spread * normal(&mut rng));
        let text = manifest.captions.get(&i).cloned().unwrap_or_default();
        captions.push(Entry { class_id: i as u32, text, embedding: normalize(emb.collect()) });

        let (rgb, stripes) = colours[&s.class_id];
        let mut px = Vec::with_capacity(THUMBNAIL_LEN);
        for y in 0..THUMBNAIL_SIDE {
            for _x in 0..THUMBNAIL_SIDE {
                let band = 0.5 + 0.5 * (2.0 * PI * stripes as f64 * y as f64 / THUMBNAIL_SIDE as f64).sin();
                for c in rgb {
                    px.push((c * (0.4 + 0.6 * band) + 0.05 * normal(&mut rng)).clamp(0.0, 1.0));
                }
            }
        }
        thumbnails.push(Thumbnail::new(px)?);
    }
    let captions = EmbeddingDatabase::new(caption_dim, captions)?;
    Ok(SyntheticTargets { labels, captions, thumbnails })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_classes: 8,
            records_per_class: 50,
            channels: 4,
            samples: 64,
            sample_rate_hz: 1000,
            noise_sigma: sigma,
            seed: 7,
        }
    }

    #[test]
    fn counts_and_labels() {
        let (s, m) = synthesize_dataset(&spec(1.0)).unwrap();
        assert_eq!(s.len(), 400);
        assert_eq!(
            m.labels.values().cloned().collect::<Vec<_>>(),
            (0..8).map(|c| format!("class_{c}")).collect::<Vec<_>>()
        );
        assert_eq!(m.split.len(), 400);
        m.validate(&s).unwrap();
        assert_eq!(s[49].class_id, 0);
        assert_eq!(s[50].class_id, 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize_dataset(&spec(1.0)).unwrap();
        let b = synthesize_dataset(&spec(1.0)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(1.0);
        other.seed = 8;
        assert_ne!(synthesize_dataset(&other).unwrap().0, a.0);
    }

    #[test]
    fn noiseless_records_repeat_the_template() {
        let (s, _) = synthesize_dataset(&spec(0.0)).unwrap();
        assert!(s[..50].iter().all(|r| r.data() == s[0].data()));
        assert_ne!(s[0].data(), s[50].data());
        let rms = (s[0].channel(0).iter().map(|v| v * v).sum::<f64>() / 64.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(1.0);
        s.n_classes = 0;
        assert!(synthesize_dataset(&s).is_err());
        let mut s = spec(-1.0);
        assert!(synthesize_dataset(&s).is_err());
        s.noise_sigma = 1.0;
        s.sample_rate_hz = 100;
        assert!(synthesize_dataset(&s).is_err());
    }

    #[test]
    fn targets_are_orthonormal_and_aligned() {
        let (s, m) = synthesize_dataset(&spec(1.0)).unwrap();
        let t = synthesize_targets(&s, &m, 64, 32, 3).unwrap();
        assert_eq!((t.labels.len(), t.captions.len(), t.thumbnails.len()), (8, 400, 400));
        for a in t.labels.entries() {
            for b in t.labels.entries() {
                let d: f64 = a.embedding.iter().zip(&b.embedding).map(|(x, y)| x * y).sum();
                let want = if a.class_id == b.class_id { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-6);
            }
        }
        assert!(synthesize_targets(&s, &m, 4, 32, 3).is_err());
    }
}

//! Brain-signal datasets: file formats, preprocessing, synthetic data and
//! splits.

mod eegd;
mod filter;
mod split;
mod synth;
mod thumbnails;

pub use eegd::{load_dataset, load_signals, read_signals, save_dataset, save_signals, write_signals};
pub use filter::{preprocess, BandpassFilter, FILTER_TAPS};
pub use split::{split_dataset, SplitRatios};
pub use synth::{synthesize_dataset, synthesize_targets, SyntheticSpec, SyntheticTargets};
pub use thumbnails::{load_thumbnails, read_thumbnails, save_thumbnails, write_thumbnails};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("malformed {file} file: {reason}")]
    Format { file: &'static str, reason: String },
    #[error("{file} file is truncated")]
    Truncated { file: &'static str },
    #[error("manifest has no label for class {0}")]
    MissingLabel(u32),
    #[error("manifest refers to record {index}, dataset has {count}")]
    RecordIndex { index: usize, count: usize },
    #[error("invalid signal: {0}")]
    Signal(String),
    #[error("invalid preprocessing parameters: {0}")]
    Preprocess(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid synthetic dataset spec: {0}")]
    Synthetic(String),
}

/// One multichannel recording stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainSignal {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
    pub class_id: u32,
    pub subject_id: u32,
    pub sample_rate_hz: u32,
}

impl BrainSignal {
    pub fn new(
        channels: usize,
        samples: usize,
        data: Vec<f64>,
        class_id: u32,
        subject_id: u32,
        sample_rate_hz: u32,
    ) -> Result<Self, DataError> {
        if channels == 0 || samples == 0 {
            return Err(DataError::Signal(format!("shape {channels}×{samples} is empty")));
        }
        if data.len() != channels * samples {
            return Err(DataError::Signal(format!("{} values for shape {channels}×{samples}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Signal(format!("non-finite sample at index {i}")));
        }
        if sample_rate_hz == 0 {
            return Err(DataError::Signal("sample rate must be positive".into()));
        }
        Ok(BrainSignal { channels, samples, data, class_id, subject_id, sample_rate_hz })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.channels, self.samples], self.data.clone()).expect("shape checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DataError::Split(format!("unknown split {other:?}"))),
        }
    }
}

/// Label texts per class, captions and split membership per record index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub labels: BTreeMap<u32, String>,
    #[serde(default)]
    pub captions: BTreeMap<usize, String>,
    #[serde(default)]
    pub split: BTreeMap<usize, Split>,
}

impl DatasetManifest {
    /// Checks the manifest against the records it describes.
    pub fn validate(&self, signals: &[BrainSignal]) -> Result<(), DataError> {
        if let Some(s) = signals.iter().find(|s| !self.labels.contains_key(&s.class_id)) {
            return Err(DataError::MissingLabel(s.class_id));
        }
        let count = signals.len();
        let stray = self.captions.keys().chain(self.split.keys()).find(|&&i| i >= count);
        if let Some(&index) = stray {
            return Err(DataError::RecordIndex { index, count });
        }
        if !self.split.is_empty() && self.split.len() != count {
            return Err(DataError::Split(format!("split covers {} of {count} records", self.split.len())));
        }
        Ok(())
    }

    /// Record indices assigned to `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split.iter().filter(|(_, &s)| s == split).map(|(&i, _)| i).collect()
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(class_id: u32) -> BrainSignal {
        BrainSignal::new(1, 2, vec![0.0, 1.0], class_id, 0, 1000).unwrap()
    }

    #[test]
    fn signal_invariants() {
        assert!(BrainSignal::new(0, 2, vec![], 0, 0, 1000).is_err());
        assert!(BrainSignal::new(1, 2, vec![0.0], 0, 0, 1000).is_err());
        assert!(BrainSignal::new(1, 1, vec![f64::NAN], 0, 0, 1000).is_err());
        assert!(BrainSignal::new(1, 1, vec![0.0], 0, 0, 0).is_err());
        let s = BrainSignal::new(2, 3, (0..6).map(f64::from).collect(), 0, 0, 1000).unwrap();
        assert_eq!(s.channel(1), &[3.0, 4.0, 5.0]);
        assert_eq!(s.to_tensor().shape(), &[2, 3]);
    }

    #[test]
    fn manifest_validation() {
        let mut m = DatasetManifest {
            labels: (0..=40).map(|c| (c, format!("class_{c}"))).collect(),
            ..DatasetManifest::default()
        };
        assert_eq!(m.validate(&[sig(41)]), Err(DataError::MissingLabel(41)));
        m.validate(&[sig(40), sig(0)]).unwrap();
        m.split.insert(0, Split::Train);
        assert!(m.validate(&[sig(40), sig(0)]).is_err());
        m.split.insert(1, Split::Test);
        m.validate(&[sig(40), sig(0)]).unwrap();
        m.captions.insert(2, "x".into());
        assert_eq!(m.validate(&[sig(40), sig(0)]), Err(DataError::RecordIndex { index: 2, count: 2 }));
    }

    #[test]
    fn manifest_json_shape() {
        let mut m = DatasetManifest::default();
        m.labels.insert(3, "dog".into());
        m.captions.insert(0, "a dog".into());
        m.split.insert(0, Split::Val);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["labels"]["3"], "dog");
        assert_eq!(json["split"]["0"], "val");
        let back: DatasetManifest = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.indices(Split::Val), vec![0]);
    }
}

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DataError::Split(format!("ratios {all:?} must be positive")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("ratios {all:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Stratified split of records by class. Within each class the records are
/// shuffled with a seeded generator (classes visited in ascending id order),
/// then the first `max(1, round(n·val))` go to validation, the next
/// `max(1, round(n·test))` to test and the rest to training.
pub fn split_dataset(class_ids: &[u32], ratios: SplitRatios, seed: u64) -> Result<BTreeMap<usize, Split>, DataError> {
    ratios.validate()?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in class_ids.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for (class, mut idx) in by_class {
        let n = idx.len();
        let n_val = ((n as f64 * ratios.val).round() as usize).max(1);
        let n_test = ((n as f64 * ratios.test).round() as usize).max(1);
        if n_val + n_test >= n {
            return Err(DataError::Split(format!(
                "class {class} has {n} records, needs more than {} for val+test plus one for training",
                n_val + n_test
            )));
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            let s = if k < n_val {
                Split::Val
            } else if k < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            out.insert(i, s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fifty_per_class() {
        let ids: Vec<u32> = (0..8).flat_map(|c| std::iter::repeat_n(c, 50)).collect();
        let s = split_dataset(&ids, SplitRatios::default(), 1).unwrap();
        for c in 0..8 {
            let count = |want| ids.iter().enumerate().filter(|(i, &k)| k == c && s[i] == want).count();
            assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (40, 5, 5));
        }
        assert_eq!(s, split_dataset(&ids, SplitRatios::default(), 1).unwrap());
        assert_ne!(s, split_dataset(&ids, SplitRatios::default(), 2).unwrap());
    }

    #[test]
    fn invalid_ratios_and_small_classes() {
        let ids = vec![0; 10];
        assert!(split_dataset(&ids, SplitRatios { train: 0.5, val: 0.5, test: 0.1 }, 0).is_err());
        assert!(split_dataset(&ids, SplitRatios { train: 1.0, val: 0.0, test: 0.0 }, 0).is_err());
        assert!(split_dataset(&[0, 0], SplitRatios::default(), 0).is_err());
        let s = split_dataset(&[0, 0, 0], SplitRatios::default(), 0).unwrap();
        assert_eq!(s.values().filter(|&&v| v == Split::Train).count(), 1);
    }

    proptest! {
        #[test]
        fn partition_is_exact(seed in any::<u64>(), sizes in prop::collection::vec(3usize..40, 1..6)) {
            let ids: Vec<u32> =
                sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n)).collect();
            let s = split_dataset(&ids, SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(s.len(), ids.len());
            prop_assert!(s.keys().copied().eq(0..ids.len()));
            for c in 0..sizes.len() as u32 {
                let has = |want| ids.iter().enumerate().any(|(i, &k)| k == c && s[&i] == want);
                prop_assert!(has(Split::Train) && has(Split::Val) && has(Split::Test));
            }
        }
    }
}

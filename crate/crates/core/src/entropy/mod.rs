//! Quantization, the training-time noise surrogate, the learned factorized
//! density and its table-driven range coder.

mod density;
mod pmf;
mod range_coder;

pub use density::{DensityBackward, FactorizedDensity, LIKELIHOOD_FLOOR};
pub use pmf::{build_pmf_table, support_offset, PmfChannel, PmfTable, PROB_BITS, PROB_TOTAL, SUPPORT_RADIUS};
pub use range_coder::{range_decode, range_encode, RangeDecoder, RangeEncoder};

use rand::distributions::Open01;
use rand::Rng;
use thiserror::Error;

use crate::codec::LayerId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("non-finite latent value at index {0}")]
    NonFinite(usize),
    #[error("symbol {symbol} of channel {channel} is outside the table support")]
    OutOfSupport { channel: usize, symbol: i32 },
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("{symbols} symbols but the table has {channels} channels")]
    ChannelCount { symbols: usize, channels: usize },
    #[error("coded payload is truncated")]
    Truncated,
    #[error("coded payload is corrupt: {0}")]
    Corrupt(String),
}

/// Integer latent symbols of one layer, one per latent channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedCode {
    pub layer: LayerId,
    pub symbols: Vec<i32>,
}

/// Rounds to the nearest integer, ties away from zero.
pub fn quantize(y: &[f64]) -> Result<Vec<i32>, CodingError> {
    y.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(CodingError::NonFinite(i));
            }
            Ok(v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        })
        .collect()
}

/// Adds independent `U(-0.5, 0.5)` noise to every entry.
pub fn add_uniform_noise<R: Rng + ?Sized>(y: &[f64], rng: &mut R) -> Vec<f64> {
    y.iter().map(|&v| v + (rng.sample::<f64, _>(Open01) - 0.5)).collect()
}

/// Estimated code length in bits of `v` under `density`.
pub fn estimate_rate_bits(density: &FactorizedDensity, v: &[f64]) -> f64 {
    density.rate_bits(v)
}

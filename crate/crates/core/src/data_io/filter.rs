//! Zero-phase band-pass filtering and time windowing.
//!
//! The filter is a 129-tap windowed-sinc band-pass with a Hamming window,
//! scaled to unit gain at the band centre. It is applied as a centred
//! convolution (no group delay) over the signal extended by mirror
//! reflection at both ends, then the requested window is cut out.

use std::f64::consts::PI;

use super::{BrainSignal, DataError};

pub const FILTER_TAPS: usize = 129;

#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    taps: Vec<f64>,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

impl BandpassFilter {
    pub fn design(low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<Self, DataError> {
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0) {
            return Err(DataError::Preprocess(format!(
                "band {low_hz}–{high_hz} Hz invalid for {sample_rate_hz} Hz sampling"
            )));
        }
        let (f1, f2) = (low_hz / sample_rate_hz, high_hz / sample_rate_hz);
        let m = (FILTER_TAPS - 1) as f64 / 2.0;
        let mut taps: Vec<f64> = (0..FILTER_TAPS)
            .map(|n| {
                let k = n as f64 - m;
                let ideal = 2.0 * f2 * sinc(2.0 * f2 * k) - 2.0 * f1 * sinc(2.0 * f1 * k);
                let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (FILTER_TAPS - 1) as f64).cos();
                ideal * w
            })
            .collect();
        let mut f = BandpassFilter { taps: taps.clone() };
        let gain = f.gain((low_hz + high_hz) / 2.0, sample_rate_hz);
        taps.iter_mut().for_each(|t| *t /= gain);
        f.taps = taps;
        Ok(f)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, &h)| (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin()));
        (re * re + im * im).sqrt()
    }

    /// Centred convolution over the mirror-extended input.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let half = (self.taps.len() / 2) as isize;
        let n = x.len() as isize;
        let at = |mut i: isize| -> f64 {
            if n == 1 {
                return x[0];
            }
            let period = 2 * (n - 1);
            i = i.rem_euclid(period);
            if i >= n {
                i = period - i;
            }
            x[i as usize]
        };
        (0..n).map(|t| self.taps.iter().enumerate().map(|(k, &h)| h * at(t + half - k as isize)).sum()).collect()
    }
}

/// Band-pass filters every channel, then keeps samples in
/// `[win_start_ms, win_end_ms)`.
pub fn preprocess(
    raw: &BrainSignal,
    band_lo_hz: f64,
    band_hi_hz: f64,
    win_start_ms: f64,
    win_end_ms: f64,
) -> Result<BrainSignal, DataError> {
    let rate = raw.sample_rate_hz as f64;
    let filter = BandpassFilter::design(band_lo_hz, band_hi_hz, rate)?;
    let duration_ms = raw.samples() as f64 * 1000.0 / rate;
    if !(win_start_ms >= 0.0 && win_start_ms < win_end_ms && win_end_ms <= duration_ms + 1e-9) {
        return Err(DataError::Preprocess(format!(
            "window {win_start_ms}–{win_end_ms} ms outside the {duration_ms} ms record"
        )));
    }
    let start = (win_start_ms * rate / 1000.0).round() as usize;
    let end = ((win_end_ms * rate / 1000.0).round() as usize).min(raw.samples());
    if end <= start {
        return Err(DataError::Preprocess("window shorter than one sample".into()));
    }
    let data = (0..raw.channels()).flat_map(|c| filter.apply(raw.channel(c))[start..end].to_vec()).collect();
    BrainSignal::new(raw.channels(), end - start, data, raw.class_id, raw.subject_id, raw.sample_rate_hz)
}

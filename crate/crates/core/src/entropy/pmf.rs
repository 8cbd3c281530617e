//! Quantized per-channel probability tables.
//!
//! Serialized form (little endian): `count u32`, then per channel
//! `offset i16, length u16, length × u16 frequency`. Frequencies are at
//! least 1 and sum to exactly `2^16`.
//!
//! Quantization of a real PMF `p` (normalized over the support) uses
//! largest-remainder rounding with a floor of 1:
//!
//! 1. `q_k = max(1, floor(p_k · 2^16))`;
//! 2. if the total is short, add 1 to the symbols with the largest
//!    fractional parts `p_k · 2^16 - floor(p_k · 2^16)` (ties: lower index);
//! 3. if the total is over, repeatedly subtract 1 from the symbol with the
//!    largest `q_k` (ties: lower index).

use std::io::{Read, Write};

use super::{CodingError, FactorizedDensity};

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
/// Table support is `median ± SUPPORT_RADIUS`.
pub const SUPPORT_RADIUS: i32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PmfChannel {
    offset: i32,
    freqs: Vec<u32>,
    cum: Vec<u32>,
}

impl PmfChannel {
    /// Validates a frequency table whose first symbol is `offset`.
    pub fn new(offset: i32, freqs: Vec<u32>) -> Result<Self, CodingError> {
        if freqs.len() < 2 || freqs.len() > u16::MAX as usize {
            return Err(CodingError::InvalidTable(format!("support length {} outside 2..=65535", freqs.len())));
        }
        if i16::try_from(offset).is_err() || i16::try_from(offset + freqs.len() as i32 - 1).is_err() {
            return Err(CodingError::InvalidTable(format!("offset {offset} outside the i16 range")));
        }
        if freqs.contains(&0) {
            return Err(CodingError::InvalidTable("zero frequency".into()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in &freqs {
            acc = acc.checked_add(f).ok_or_else(|| CodingError::InvalidTable("frequency overflow".into()))?;
            cum.push(acc);
        }
        if acc != PROB_TOTAL {
            return Err(CodingError::InvalidTable(format!("frequencies sum to {acc}, expected {PROB_TOTAL}")));
        }
        Ok(PmfChannel { offset, freqs, cum })
    }

    /// Quantizes a real-valued PMF over `offset..offset+probs.len()`.
    pub fn from_probs(offset: i32, probs: &[f64]) -> Result<Self, CodingError> {
        let n = probs.len();
        if n < 2 || n > PROB_TOTAL as usize / 2 {
            return Err(CodingError::InvalidTable(format!("cannot quantize {n} symbols")));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CodingError::InvalidTable("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(CodingError::InvalidTable("probabilities sum to zero".into()));
        }
        let scaled: Vec<f64> = probs.iter().map(|p| p / total * PROB_TOTAL as f64).collect();
        let mut q: Vec<u32> = scaled.iter().map(|&s| (s.floor() as u32).max(1)).collect();
        let sum: i64 = q.iter().map(|&v| v as i64).sum();
        let mut deficit = PROB_TOTAL as i64 - sum;
        if deficit > 0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let ra = scaled[a] - scaled[a].floor();
                let rb = scaled[b] - scaled[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            for &i in order.iter().cycle() {
                if deficit == 0 {
                    break;
                }
                q[i] += 1;
                deficit -= 1;
            }
        }
        while deficit < 0 {
            let (i, _) = q.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("non-empty");
            q[i] -= 1;
            deficit += 1;
        }
        PmfChannel::new(offset, q)
    }

    pub fn offset(&self) -> i32 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn min_symbol(&self) -> i32 {
        self.offset
    }

    pub fn max_symbol(&self) -> i32 {
        self.offset + self.freqs.len() as i32 - 1
    }

    pub fn contains(&self, symbol: i32) -> bool {
        (self.min_symbol()..=self.max_symbol()).contains(&symbol)
    }

    /// `(cumulative start, frequency)` of `symbol`.
    pub fn interval(&self, symbol: i32) -> Option<(u32, u32)> {
        if !self.contains(symbol) {
            return None;
        }
        let i = (symbol - self.offset) as usize;
        Some((self.cum[i], self.freqs[i]))
    }

    /// Symbol whose cumulative interval contains `value`.
    pub fn lookup(&self, value: u32) -> Option<(i32, u32, u32)> {
        if value >= PROB_TOTAL {
            return None;
        }
        let i = self.cum.partition_point(|&c| c <= value) - 1;
        Some((self.offset + i as i32, self.cum[i], self.freqs[i]))
    }

    pub fn probability(&self, symbol: i32) -> Option<f64> {
        self.interval(symbol).map(|(_, f)| f as f64 / PROB_TOTAL as f64)
    }

    /// Ideal code length of `symbol` in bits under the quantized table.
    pub fn bits(&self, symbol: i32) -> Option<f64> {
        self.probability(symbol).map(|p| -p.log2())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PmfTable {
    channels: Vec<PmfChannel>,
}

impl PmfTable {
    pub fn new(channels: Vec<PmfChannel>) -> Self {
        PmfTable { channels }
    }

    pub fn channels(&self) -> &[PmfChannel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Clamps every symbol into its channel support and returns how many
    /// had to be moved.
    pub fn clamp(&self, symbols: &[i32]) -> (Vec<i32>, usize) {
        let mut moved = 0;
        let out = symbols
            .iter()
            .zip(&self.channels)
            .map(|(&s, ch)| {
                let c = s.clamp(ch.min_symbol(), ch.max_symbol());
                moved += usize::from(c != s);
                c
            })
            .collect();
        (out, moved)
    }

    /// `Σ -log2 q_i(s_i)` under the quantized tables.
    pub fn estimate_bits(&self, symbols: &[i32]) -> Result<f64, CodingError> {
        symbols
            .iter()
            .zip(&self.channels)
            .enumerate()
            .map(|(i, (&s, ch))| ch.bits(s).ok_or(CodingError::OutOfSupport { channel: i, symbol: s }))
            .sum()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&(self.channels.len() as u32).to_le_bytes())?;
        for ch in &self.channels {
            w.write_all(&(ch.offset as i16).to_le_bytes())?;
            w.write_all(&(ch.freqs.len() as u16).to_le_bytes())?;
            for &f in &ch.freqs {
                w.write_all(&(f as u16).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CodingError> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| CodingError::Truncated)?;
        let count = u32::from_le_bytes(b4) as usize;
        let mut channels = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let mut hdr = [0u8; 4];
            r.read_exact(&mut hdr).map_err(|_| CodingError::Truncated)?;
            let offset = i16::from_le_bytes([hdr[0], hdr[1]]) as i32;
            let len = u16::from_le_bytes([hdr[2], hdr[3]]) as usize;
            let mut raw = vec![0u8; len * 2];
            r.read_exact(&mut raw).map_err(|_| CodingError::Truncated)?;
            let freqs = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect();
            channels.push(PmfChannel::new(offset, freqs)?);
        }
        Ok(PmfTable { channels })
    }
}

/// First symbol of the table centred on `median`. Medians are limited so the
/// whole support stays within `i16`.
pub fn support_offset(median: i32) -> i32 {
    let lim = i16::MAX as i32 - SUPPORT_RADIUS;
    median.clamp(-lim, lim) - SUPPORT_RADIUS
}

/// Tables over `median ± 64` built from the density's integer likelihoods.
pub fn build_pmf_table(density: &FactorizedDensity, medians: &[i32]) -> Result<PmfTable, CodingError> {
    if medians.len() != density.channels() {
        return Err(CodingError::ChannelCount { symbols: medians.len(), channels: density.channels() });
    }
    let channels = medians
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let offset = support_offset(m);
            let probs: Vec<f64> = (0..=2 * SUPPORT_RADIUS)
                .map(|k| density.interval_mass(c, (offset + k) as f64).max(super::LIKELIHOOD_FLOOR))
                .collect();
            PmfChannel::from_probs(offset, &probs)
        })
        .collect::<Result<_, _>>()?;
    Ok(PmfTable { channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Parameterized;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logistic_table() -> (Vec<f64>, PmfChannel) {
        let d = FactorizedDensity::new(1, "d");
        let t = build_pmf_table(&d, &[0]).unwrap();
        // independent oracle: closed-form logistic masses, floored, normalized
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let p: Vec<f64> =
            (-64..=64).map(|k| (s(k as f64 + 0.5) - s(k as f64 - 0.5)).max(super::super::LIKELIHOOD_FLOOR)).collect();
        let z: f64 = p.iter().sum();
        (p.iter().map(|v| v / z).collect(), t.channels()[0].clone())
    }

    #[test]
    fn floor_and_total_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = FactorizedDensity::new(6, "d");
        for p in d.params_mut() {
            p.value.iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
        let t = build_pmf_table(&d, &[0, 3, -7, 100, -30000, 40000]).unwrap();
        for ch in t.channels() {
            assert_eq!(ch.len(), 129);
            assert!(ch.freqs().iter().all(|&f| f >= 1));
            assert_eq!(ch.freqs().iter().sum::<u32>(), PROB_TOTAL);
        }
        assert_eq!(t.channels()[1].offset(), 3 - 64);
    }

    #[test]
    fn logistic_table_kl_is_the_floor_cost() {
        let (p, ch) = logistic_table();
        let kl: f64 = p.iter().zip(ch.freqs()).map(|(&p, &q)| p * (p / (q as f64 / PROB_TOTAL as f64)).log2()).sum();
        // flooring ~106 far-tail symbols to 1/65536 moves ≈1.6e-3 of the mass,
        // which bounds the divergence from below at about 2.2e-3 bits
        let floored = ch.freqs().iter().filter(|&&f| f == 1).count();
        let moved = floored as f64 / PROB_TOTAL as f64;
        assert!(kl > 0.0);
        assert!(kl < 1.05 * moved / std::f64::consts::LN_2 + 1e-4, "kl {kl} floored {floored}");
        assert!(kl < 2.5e-3, "kl {kl}");
    }

    #[test]
    fn quantization_rules() {
        let ch = PmfChannel::from_probs(-1, &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(ch.freqs(), &[16384, 32768, 16384]);
        let ch = PmfChannel::from_probs(0, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ch.freqs(), &[65534, 1, 1]);
        let ch = PmfChannel::from_probs(0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(ch.freqs(), &[21846, 21845, 21845]);
        assert!(PmfChannel::new(0, vec![PROB_TOTAL - 1, 0, 1]).is_err());
        assert!(PmfChannel::new(0, vec![PROB_TOTAL]).is_err());
    }

    #[test]
    fn estimate_counts_half_probabilities_as_one_bit() {
        let table = PmfTable::new(vec![PmfChannel::new(0, vec![32768, 32768]).unwrap(); 10]);
        assert_eq!(table.estimate_bits(&[0, 1, 0, 1, 1, 0, 0, 0, 1, 1]).unwrap(), 10.0);
        assert!(table.estimate_bits(&[2; 10]).is_err());
    }

    #[test]
    fn clamp_moves_outliers_into_support() {
        let table = PmfTable::new(vec![PmfChannel::new(-2, vec![PROB_TOTAL / 4; 4]).unwrap(); 3]);
        assert_eq!(table.clamp(&[-5, 0, 9]), (vec![-2, 0, 1], 2));
    }

    #[test]
    fn serialization_round_trip_and_truncation() {
        let (_, ch) = logistic_table();
        let table = PmfTable::new(vec![ch.clone(), PmfChannel::new(-3, vec![PROB_TOTAL / 2; 2]).unwrap()]);
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + (4 + 129 * 2) + (4 + 4));
        assert_eq!(PmfTable::read_from(&mut buf.as_slice()).unwrap(), table);
        assert_eq!(PmfTable::read_from(&mut &buf[..buf.len() - 1]), Err(CodingError::Truncated));
    }
}

//! Bandwidth-limited delivery of layered streams.
//!
//! The link is lossless but carries at most `budget_bits` per signal. The
//! sender keeps the longest layer prefix whose whole container (headers and
//! checksum included) fits, and fails if not even layer 1 fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstream::{inspect, slice, ContainerError};
use crate::codec::LayerId;
use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("channel budget must be positive")]
    ZeroBudget,
    #[error("budget of {budget} bits cannot carry layer 1 ({needed} bits)")]
    BudgetTooSmall { budget: u64, needed: u64 },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    #[default]
    PrefixDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub budget_bits_per_signal: u64,
    #[serde(default)]
    pub policy: DropPolicy,
}

impl ChannelModel {
    pub fn new(budget_bits_per_signal: u64) -> Result<Self, LinkError> {
        if budget_bits_per_signal == 0 {
            return Err(LinkError::ZeroBudget);
        }
        Ok(ChannelModel { budget_bits_per_signal, policy: DropPolicy::PrefixDrop })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub delivered_layers: Vec<LayerId>,
    pub dropped_layers: Vec<LayerId>,
    pub delivered_bits: u64,
    pub offered_bits: u64,
    pub budget_bits: u64,
}

pub fn simulate(stream: &[u8], channel: &ChannelModel) -> Result<(Vec<u8>, DeliveryReport), LinkError> {
    if channel.budget_bits_per_signal == 0 {
        return Err(LinkError::ZeroBudget);
    }
    let info = inspect(stream)?;
    let budget = channel.budget_bits_per_signal;
    let mut delivered: Option<(u8, Vec<u8>)> = None;
    let mut needed_first = 0;
    for k in 1..=info.layers.len() as u8 {
        let candidate = slice(stream, k)?;
        let bits = 8 * candidate.len() as u64;
        if k == 1 {
            needed_first = bits;
        }
        if bits > budget {
            break;
        }
        delivered = Some((k, candidate));
    }
    let (k, bytes) = delivered.ok_or(LinkError::BudgetTooSmall { budget, needed: needed_first })?;
    let (kept, dropped): (Vec<_>, Vec<_>) = info.layers.iter().map(|(l, _)| *l).partition(|l| l.number() <= k);
    let report = DeliveryReport {
        delivered_layers: kept,
        dropped_layers: dropped,
        delivered_bits: 8 * bytes.len() as u64,
        offered_bits: 8 * stream.len() as u64,
        budget_bits: budget,
    };
    Ok((bytes, report))
}

/// Per-signal results in input order.
pub fn simulate_batch(
    streams: &[Vec<u8>],
    channel: &ChannelModel,
    exec: Exec,
) -> Vec<Result<(Vec<u8>, DeliveryReport), LinkError>> {
    exec.map(streams, |_, s| simulate(s, channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::{pack, unpack};
    use std::collections::BTreeMap;

    fn stream(sizes: &[usize]) -> Vec<u8> {
        let p: BTreeMap<LayerId, Vec<u8>> =
            sizes.iter().enumerate().map(|(i, &n)| (LayerId::ALL[i], vec![i as u8; n])).collect();
        pack(&p, 0, true).unwrap()
    }

    #[test]
    fn budget_cases() {
        let s = stream(&[10, 20, 30]);
        let l1 = 8 * slice(&s, 1).unwrap().len() as u64;
        let l2 = 8 * slice(&s, 2).unwrap().len() as u64;
        let full = 8 * s.len() as u64;

        let (bytes, r) = simulate(&s, &ChannelModel::new(full).unwrap()).unwrap();
        assert_eq!(bytes, s);
        assert!(r.dropped_layers.is_empty());

        let (bytes, r) = simulate(&s, &ChannelModel::new(l2 - 1).unwrap()).unwrap();
        assert_eq!(r.delivered_layers, vec![LayerId::Label]);
        assert_eq!(r.dropped_layers, vec![LayerId::Caption, LayerId::Thumbnail]);
        assert_eq!(unpack(&bytes).unwrap().payloads.len(), 1);
        assert_eq!(r.delivered_bits, l1);

        assert_eq!(
            simulate(&s, &ChannelModel::new(l1 - 1).unwrap()),
            Err(LinkError::BudgetTooSmall { budget: l1 - 1, needed: l1 })
        );
        assert_eq!(ChannelModel::new(0), Err(LinkError::ZeroBudget));
    }

    #[test]
    fn corrupt_streams_fail() {
        let mut s = stream(&[4]);
        s[9] ^= 1;
        assert!(matches!(simulate(&s, &ChannelModel::new(10_000).unwrap()), Err(LinkError::Container(_))));
    }

    #[test]
    fn batch_keeps_order() {
        let streams = vec![stream(&[1]), stream(&[30, 30]), stream(&[1, 1, 1])];
        let ch = ChannelModel::new(8 * 60).unwrap();
        let seq = simulate_batch(&streams, &ch, Exec::Sequential);
        assert_eq!(seq, simulate_batch(&streams, &ch, Exec::Parallel));
        assert_eq!(seq[2].as_ref().unwrap().1.delivered_layers.len(), 3);
        assert_eq!(seq[1].as_ref().unwrap().1.delivered_layers.len(), 1);
    }
}

//! Constant-bit-rate flows between random node pairs.

use rand::seq::index::sample;
use rand::Rng;

use crate::network::NodeId;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub period: f64,
    pub payload: u32,
    /// Time of the first send.
    pub offset: f64,
}

impl Flow {
    /// Send instant `k`, anchored to the offset so periods never drift.
    pub fn send_time(&self, k: u64) -> f64 {
        self.offset + k as f64 * self.period
    }

    /// Number of sends strictly before `duration`.
    pub fn sends_before(&self, duration: f64) -> u64 {
        (0..).take_while(|&k| self.send_time(k) < duration).count() as u64
    }
}

/// `count` flows with distinct endpoints drawn uniformly, each starting at a
/// uniform offset in `[start, start + period)`.
pub fn generate_flows(
    node_count: usize,
    count: usize,
    period: f64,
    payload: u32,
    start: f64,
    rng: &mut RngStream,
) -> Vec<Flow> {
    if node_count < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|i| {
            let pair = sample(rng, node_count, 2);
            let offset = start + rng.random_range(0.0..period);
            Flow {
                id: i as u32,
                src: NodeId::from(pair.index(0)),
                dst: NodeId::from(pair.index(1)),
                period,
                payload,
                offset: (offset * 1000.0).round() / 1000.0,
            }
        })
        .collect()
}

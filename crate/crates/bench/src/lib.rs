//! Fixtures shared by the benchmarks.

use chra_core::chra::path::Adjacency;
use chra_core::network::NodeId;
use chra_core::rng::RngStream;
use rand::Rng;

/// Random geometric graph on `n` nodes in a unit square.
pub fn geometric_graph(n: u32, radius: f64, seed: u64) -> Adjacency {
    let mut rng = RngStream::new(seed, "bench-graph");
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let mut adj = Adjacency::new();
    for a in 0..n {
        adj.entry(NodeId(a)).or_default();
        for b in a + 1..n {
            let (pa, pb) = (pts[a as usize], pts[b as usize]);
            if (pa.0 - pb.0).hypot(pa.1 - pb.1) <= radius {
                adj.entry(NodeId(a)).or_default().insert(NodeId(b));
                adj.entry(NodeId(b)).or_default().insert(NodeId(a));
            }
        }
    }
    adj
}

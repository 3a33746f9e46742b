//! Hand-placed topologies shared by the scenario tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use chra_core::metrics::{PacketKind, TxRecord};
use chra_core::network::{NodeId, Point};
use chra_core::sim::Scenario;
use chra_core::Protocol;

pub const RANGE: f64 = 50.0;

pub fn scenario(points: &[(f64, f64)], protocol: Protocol) -> Scenario {
    let positions = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
    Scenario::fixed(positions, RANGE, protocol).with_trace()
}

pub fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Undirected hops taken by data packets in `[from, to)`.
pub fn data_hops(trace: &[TxRecord], from: f64, to: f64) -> BTreeSet<(NodeId, NodeId)> {
    trace
        .iter()
        .filter(|r| r.kind == PacketKind::Data && r.time >= from && r.time < to)
        .map(|r| {
            let b = r.to.expect("data is unicast");
            (r.from.min(b), r.from.max(b))
        })
        .collect()
}

pub fn path_hops(path: &[u32]) -> BTreeSet<(NodeId, NodeId)> {
    path.windows(2)
        .map(|w| (NodeId(w[0].min(w[1])), NodeId(w[0].max(w[1]))))
        .collect()
}

/// Two-hop repair case: EEP a-b-c-e-f with d adjacent to both c and f. `H` heads c's
/// cluster and `F` heads f's; the g's and l's are leaves that make them heads.
///
/// ids: a0 b1 c2 e3 f4 d5 H6 g7 g8 g9 l10 l11 l12 l13
pub const TWO_HOP: &[(f64, f64)] = &[
    (0.0, 0.0),
    (40.0, 0.0),
    (80.0, 0.0),
    (120.0, 0.0),
    (160.0, 0.0),
    (120.0, 25.0),
    (80.0, 45.0),
    (80.0, 90.0),
    (50.0, 80.0),
    (110.0, 80.0),
    (200.0, 0.0),
    (190.0, 30.0),
    (170.0, -40.0),
    (160.0, -45.0),
];

/// Full repair case: EEP a-b-c-d-e-f; without e the only way on is d-g-h-f, which
/// replaces one node by two. K heads d's cluster, f heads e's and h's.
///
/// ids: a0 b1 c2 d3 e4 f5 g6 h7 K8 k9 k10 k11 k12 l13 l14 l15 l16
pub const FULL: &[(f64, f64)] = &[
    (0.0, 0.0),
    (40.0, 0.0),
    (80.0, 0.0),
    (120.0, 0.0),
    (160.0, 0.0),
    (200.0, 0.0),
    (140.0, -35.0),
    (180.0, -35.0),
    (120.0, 45.0),
    (120.0, 90.0),
    (90.0, 80.0),
    (150.0, 80.0),
    (100.0, 60.0),
    (240.0, 0.0),
    (230.0, 30.0),
    (230.0, -30.0),
    (200.0, 45.0),
];

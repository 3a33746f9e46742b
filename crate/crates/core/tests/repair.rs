//! Route repair after a broken link on the two reference topologies.

mod common;

use chra_core::metrics::PacketKind;
use chra_core::network::{NodeId, Role};
use chra_core::sim::Simulation;
use chra_core::Protocol;
use common::*;

const FAIL_AT: f64 = 10.2;

#[test]
pub fn two_hop_repair_swaps_one_node_and_loses_nothing() {
    let scn = scenario(TWO_HOP, Protocol::Chra)
        .with_flow(0, 4, 5.0, 0.5)
        .with_failure(FAIL_AT, 3)
        .with_duration(20.0);
    let mut sim = Simulation::new(scn);
    sim.run_until(FAIL_AT);
    let before = sim.router().chra().unwrap().eep(NodeId(0), NodeId(4)).unwrap().path.clone();
    assert_eq!(before, ids(&[0, 1, 2, 3, 4]));
    // c's head is not c itself, so the request really crosses a link
    assert_eq!(sim.clustering().ch_of(NodeId(2)), NodeId(6));

    let out = sim.finish();
    let s = &out.stats;
    assert_eq!((s.repairs_two_hop, s.repairs_full, s.repairs_failed), (1, 0, 0));
    assert_eq!(s.by_kind.get(&PacketKind::Rerr), None, "a 2-hop repair is not announced");

    let trace = s.trace.as_ref().unwrap();
    assert_eq!(data_hops(trace, 5.0, FAIL_AT), path_hops(&[0, 1, 2, 3, 4]));
    let after = data_hops(trace, FAIL_AT, 20.0);
    assert_eq!(after, path_hops(&[0, 1, 2, 5, 4]));
    let old: std::collections::BTreeSet<_> = before.iter().collect();
    let new: std::collections::BTreeSet<_> = ids(&[0, 1, 2, 5, 4]).into_iter().collect();
    assert_eq!(old.iter().filter(|v| !new.contains(**v)).count(), 1);

    assert_eq!(out.metrics.dropped, 0);
    assert_eq!(out.metrics.delivered, out.metrics.sent);
}

#[test]
pub fn full_repair_keeps_the_prefix_and_is_announced() {
    let scn = scenario(FULL, Protocol::Chra)
        .with_flow(0, 5, 5.0, 0.5)
        .with_failure(FAIL_AT, 4)
        .with_duration(20.0);
    let mut sim = Simulation::new(scn);
    sim.run_until(FAIL_AT);
    let before = sim.router().chra().unwrap().eep(NodeId(0), NodeId(5)).unwrap().path.clone();
    assert_eq!(before, ids(&[0, 1, 2, 3, 4, 5]));
    assert_eq!(sim.clustering().ch_of(NodeId(3)), NodeId(8));
    let heads: Vec<NodeId> = sim.clustering().assignment().cluster_heads();

    sim.run_until(15.0);
    let repaired = sim.router().chra().unwrap().eep(NodeId(0), NodeId(5)).unwrap().path.clone();
    assert_eq!(repaired, ids(&[0, 1, 2, 3, 6, 7, 5]));
    assert_eq!(repaired[..4], before[..4], "prefix up to the break survives");

    let out = sim.finish();
    let s = &out.stats;
    assert_eq!((s.repairs_two_hop, s.repairs_full, s.repairs_failed), (0, 1, 0));
    let trace = s.trace.as_ref().unwrap();
    let rerr_hops: Vec<_> = trace.iter().filter(|r| r.kind == PacketKind::Rerr).collect();
    assert!(!rerr_hops.is_empty());
    assert!(
        rerr_hops.iter().any(|r| r.from_role.is_backbone() && r.to_role.is_some_and(Role::is_backbone)),
        "the RERR travels over the backbone"
    );
    let processed: u64 = s.rerr_processing.values().sum();
    assert_eq!(processed as usize, heads.len(), "every head hears of the change once");

    assert_eq!(data_hops(trace, FAIL_AT, 20.0), path_hops(&[0, 1, 2, 3, 6, 7, 5]));
    assert_eq!(out.metrics.dropped, 0);
    assert_eq!(out.metrics.delivered, out.metrics.sent);
}

#[test]
pub fn repair_failure_drops_the_buffer_after_the_timeout() {
    // without g and h there is no way past the lost node
    let mut pts = FULL.to_vec();
    pts[6] = (140.0, -300.0);
    pts[7] = (180.0, -300.0);
    let scn = scenario(&pts, Protocol::Chra)
        .with_flow(0, 5, 5.0, 0.5)
        .with_failure(FAIL_AT, 4)
        .with_duration(12.0);
    let out = Simulation::new(scn).finish();
    let s = &out.stats;
    assert_eq!((s.repairs_two_hop, s.repairs_full, s.repairs_failed), (0, 0, 1));
    assert!(s.by_kind.get(&PacketKind::Rerr).is_some_and(|&n| n > 0));
    assert!(out.metrics.dropped >= 1);
}

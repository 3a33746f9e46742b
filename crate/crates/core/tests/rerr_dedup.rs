//! One loss event is handled exactly once by every head of a connected backbone.

mod common;

use chra_core::metrics::PacketKind;
use chra_core::network::NodeId;
use chra_core::sim::Simulation;
use chra_core::Protocol;
use common::*;

/// `k` hubs 80 m apart joined by single gateways, each hub with two leaves.
/// Returns the points and the ids of the first hub's top leaf and the last
/// hub's top leaf.
fn chain(k: usize) -> (Vec<(f64, f64)>, u32, u32) {
    let mut pts = Vec::new();
    let mut src = 0;
    let mut dst = 0;
    for i in 0..k {
        let x = 80.0 * i as f64;
        pts.push((x, 0.0));
        let top = pts.len() as u32;
        pts.push((x, 40.0));
        pts.push((x, -40.0));
        if i + 1 < k {
            pts.push((x + 40.0, 0.0));
        }
        if i == 0 {
            src = top;
        }
        dst = top;
    }
    (pts, src, dst)
}

#[test]
pub fn each_head_processes_each_rerr_once() {
    for k in 2..=5 {
        let (pts, src, dst) = chain(k);
        let scn = scenario(&pts, Protocol::Chra)
            .with_flow(src, dst, 5.0, 0.5)
            .with_failure(10.2, dst)
            .with_duration(15.0);
        let mut sim = Simulation::new(scn);
        sim.run_until(10.0);
        let heads = sim.clustering().assignment().cluster_heads();
        assert_eq!(heads.len(), k, "k={k}: one head per hub");
        assert!(sim.router().chra().unwrap().eep(NodeId(src), NodeId(dst)).is_some());

        let out = sim.finish();
        let s = &out.stats;
        assert!(s.repairs_failed >= 1, "k={k}");
        assert!(!s.rerr_processing.is_empty(), "k={k}");
        for (event, &count) in &s.rerr_processing {
            assert_eq!(count as usize, k, "k={k} event {event:?}");
        }
        // the storm bound: no more backbone RERR hops than backbone links, per event
        let trace = s.trace.as_ref().unwrap();
        let backbone_hops = trace
            .iter()
            .filter(|r| r.kind == PacketKind::Rerr && r.from_role.is_backbone() && r.to_role.is_some_and(|t| t.is_backbone()))
            .count();
        let backbone_links = 2 * (k - 1);
        assert!(
            backbone_hops <= backbone_links * s.rerr_processing.len(),
            "k={k}: {backbone_hops} backbone RERR hops for {} events",
            s.rerr_processing.len()
        );
    }
}

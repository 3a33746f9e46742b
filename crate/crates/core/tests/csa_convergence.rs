//! On a static topology every head's visibility matrix converges to the
//! exact sight-area subgraph once n SAM periods have passed.

use std::collections::BTreeSet;

use chra_core::clustering::RoleAssignment;
use chra_core::config::ScenarioConfig;
use chra_core::csa::{build_backbone, ch_hop_distance, Link};
use chra_core::mobility::place_nodes;
use chra_core::network::{LinkSnapshot, NodeId};
use chra_core::rng::RngStream;
use chra_core::sim::{Scenario, Simulation};
use chra_core::Protocol;

fn ground_truth(roles: &RoleAssignment, snap: &LinkSnapshot, ch: NodeId, n: u32) -> BTreeSet<Link> {
    let bb = build_backbone(roles, snap);
    let sight: BTreeSet<NodeId> = roles
        .cluster_heads()
        .into_iter()
        .filter(|&h| ch_hop_distance(&bb, ch, h).is_some_and(|d| d <= n))
        .collect();
    snap.edges()
        .filter(|(a, b)| sight.contains(&roles.ch_of[a.idx()]) || sight.contains(&roles.ch_of[b.idx()]))
        .map(|(a, b)| Link::new(a, b))
        .collect()
}

#[test]
pub fn static_visibility_matrix_is_exact_after_warm_up() {
    let cfg = ScenarioConfig::default();
    let warm_up = f64::from(cfg.n) * cfg.t_sam;
    let mut checked = 0;
    for seed in 0..40u64 {
        let positions = place_nodes(cfg.node_count(), cfg.area_side, &mut RngStream::new(seed, "placement"));
        let mut sim = Simulation::new(Scenario::fixed(positions, cfg.tx_range, Protocol::Chra));
        sim.run_until(warm_up + 0.5);
        if !sim.clustering().trace().iter().all(|c| c.time == 0.0) {
            // roles still settling; the matrix may legitimately hold stale entries
            continue;
        }
        checked += 1;
        let roles = sim.clustering().assignment().clone();
        let snap = sim.channel().snapshot().clone();
        let chra = sim.router().chra().unwrap();
        for ch in roles.cluster_heads() {
            let vm = chra.visibility(ch).expect("every head keeps a matrix");
            assert_eq!(vm.links(), ground_truth(&roles, &snap, ch, cfg.n), "seed {seed} head {ch}");
        }
    }
    assert!(checked >= 20, "only {checked} stable topologies");
}

#[test]
pub fn far_ring_is_refreshed_half_as_often() {
    let cfg = ScenarioConfig::default();
    let positions = place_nodes(cfg.node_count(), cfg.area_side, &mut RngStream::new(3, "placement"));
    let mut sim = Simulation::new(Scenario::fixed(positions, cfg.tx_range, Protocol::Chra));
    let mut seen_ring_two = false;
    for (t, ring_one, ring_two) in [(3.5, 3.0, 0.0), (6.5, 6.0, 6.0), (9.5, 9.0, 6.0)] {
        sim.run_until(t);
        let chra = sim.router().chra().unwrap();
        for ch in sim.clustering().assignment().cluster_heads() {
            for (origin, e) in chra.visibility(ch).unwrap().entries() {
                match e.ring {
                    0 => assert_eq!(*origin, ch),
                    1 => assert_eq!(e.stamp, ring_one, "t={t} head {ch} origin {origin}"),
                    2 => {
                        seen_ring_two = true;
                        assert_eq!(e.stamp, ring_two, "t={t} head {ch} origin {origin}");
                    }
                    r => panic!("ring {r} beyond the sight area"),
                }
            }
        }
    }
    assert!(seen_ring_two);
}

//! In-area data rides only the stored end-to-end path; control traffic stays
//! on the backbone apart from the first and last hop.

mod common;

use std::collections::BTreeSet;

use chra_core::config::ScenarioConfig;
use chra_core::metrics::PacketKind;
use chra_core::network::{NodeId, Role};
use chra_core::rng::run_seed;
use chra_core::sim::{Scenario, Simulation};
use chra_core::Protocol;
use common::*;

#[test]
pub fn reference_flow_never_touches_the_head_beside_it() {
    let scn = scenario(TWO_HOP, Protocol::Chra).with_flow(0, 4, 5.0, 0.5).with_duration(20.0);
    let mut sim = Simulation::new(scn);
    sim.run_until(20.0);
    let eep = sim.router().chra().unwrap().eep(NodeId(0), NodeId(4)).unwrap().path.clone();
    // H (6) heads c's cluster and sits next to c and d, but is not on the path
    assert_eq!(sim.clustering().role(NodeId(6)), Role::ClusterHead);
    assert!(!eep.contains(&NodeId(6)));
    let out = sim.finish();
    let trace = out.stats.trace.as_ref().unwrap();
    let on_path: BTreeSet<NodeId> = eep.iter().copied().collect();
    for r in trace.iter().filter(|r| r.kind == PacketKind::Data) {
        assert!(on_path.contains(&r.from) && on_path.contains(&r.to.unwrap()), "{r:?}");
    }
    assert_eq!(out.metrics.delivered, out.metrics.sent);
}

#[test]
pub fn random_static_in_area_flows_stay_on_their_paths() {
    let mut cfg = ScenarioConfig::default();
    cfg.set("speed", "0").unwrap();
    cfg.duration = 30.0;
    let mut in_area = 0;
    for i in 0..10 {
        let scn = Scenario::from_config(&cfg, Protocol::Chra, run_seed(cfg.seed, i)).with_trace();
        let flows = scn.flows.clone();
        let mut sim = Simulation::new(scn);
        sim.run_until(cfg.duration);
        let chra = sim.router().chra().unwrap();
        let paths: Vec<Option<BTreeSet<NodeId>>> = flows
            .iter()
            .map(|f| chra.eep(f.src, f.dst).map(|e| e.path.iter().copied().collect()))
            .collect();
        let out = sim.finish();
        let s = &out.stats;
        for r in s.trace.as_ref().unwrap() {
            match r.kind {
                PacketKind::Data => {
                    let flow = s.packets[r.packet.unwrap() as usize].flow as usize;
                    if let Some(p) = &paths[flow] {
                        assert!(p.contains(&r.from) && p.contains(&r.to.unwrap()), "run {i}: {r:?}");
                    }
                }
                PacketKind::Sam => {
                    assert!(r.from_role.is_backbone() && r.to_role.unwrap().is_backbone(), "run {i}: {r:?}");
                }
                PacketKind::Rreq | PacketKind::Rrep | PacketKind::Rerr | PacketKind::Rpreq | PacketKind::Rprep => {
                    let to_backbone = r.to_role.is_some_and(Role::is_backbone);
                    assert!(r.from_role.is_backbone() || to_backbone, "run {i}: {r:?}");
                }
                _ => {}
            }
        }
        in_area += paths.iter().flatten().count();
    }
    assert!(in_area >= 10, "only {in_area} in-area flows");
}

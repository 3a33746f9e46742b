//! Every protocol sees the same world: mobility, clustering and application
//! traffic do not depend on the routing protocol under test.

use chra_core::config::ScenarioConfig;
use chra_core::rng::run_seed;
use chra_core::sim::{run_scenario, Scenario};
use chra_core::Protocol;

#[test]
pub fn traces_match_across_protocols() {
    for (speed, i) in [("0", 0), ("4", 1), ("10", 2), ("10", 3)] {
        let mut cfg = ScenarioConfig::default();
        cfg.set("speed", speed).unwrap();
        let seed = run_seed(cfg.seed, i);
        let runs: Vec<_> = Protocol::ALL
            .iter()
            .map(|&p| run_scenario(Scenario::from_config(&cfg, p, seed)))
            .collect();
        let first = &runs[0];
        assert!(first.app.len() >= 100);
        if speed != "0" {
            assert!(first.roles.len() > first.energy.len(), "speed {speed}: clustering never changed");
        }
        for (p, r) in Protocol::ALL.iter().zip(&runs).skip(1) {
            assert_eq!(r.mobility_digest, first.mobility_digest, "speed {speed} {p}: mobility");
            assert_eq!(r.roles, first.roles, "speed {speed} {p}: clustering");
            assert_eq!(r.app, first.app, "speed {speed} {p}: application");
            assert_eq!(r.stats.keepalive_tx, first.stats.keepalive_tx, "speed {speed} {p}: keep-alives");
        }
    }
}

#[test]
pub fn different_seeds_give_different_worlds() {
    let mut cfg = ScenarioConfig::default();
    cfg.set("speed", "10").unwrap();
    let a = run_scenario(Scenario::from_config(&cfg, Protocol::Chra, run_seed(1, 0)));
    let b = run_scenario(Scenario::from_config(&cfg, Protocol::Chra, run_seed(1, 1)));
    assert_ne!(a.mobility_digest, b.mobility_digest);
    assert_ne!(a.app, b.app);
}

//! Comparison protocols: backbone-only cluster routing and flat AODV.

pub mod aodv;

use crate::chra::Chra;

/// Cluster routing that carries control and data on heads and gateways only:
/// the head protocol without sight areas, path repair or user-plane paths.
pub fn backbone_routing(node_count: usize) -> Chra {
    Chra::new(node_count, false)
}

//! Packets exchanged by the routing layer.

use crate::baselines::aodv::AodvMsg;
use crate::chra::msg::ChraMsg;
use crate::metrics::PacketKind;
use crate::network::NodeId;

/// Identifies one version of a source route. A new version is minted whenever
/// the node sequence changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataRoute {
    /// Source-routed along a stored path; the full path rides along only until
    /// each hop has cached it.
    Source { key: PathKey, header: Option<Vec<NodeId>> },
    /// Next-hop forwarding over the backbone distance vector.
    Backbone,
    /// Flat hop-by-hop routing table lookup.
    HopByHop,
}

pub const DATA_HEADER_BYTES: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub id: u64,
    pub flow: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub created: f64,
    pub hops: u32,
    pub payload: u32,
    pub route: DataRoute,
}

impl DataPacket {
    pub fn size_bytes(&self) -> u32 {
        let path = match &self.route {
            DataRoute::Source { header: Some(p), .. } => p.len() as u32,
            _ => 0,
        };
        DATA_HEADER_BYTES + self.payload + path
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Chra(ChraMsg),
    Aodv(AodvMsg),
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Data(_) => PacketKind::Data,
            Packet::Chra(m) => m.kind(),
            Packet::Aodv(m) => m.kind(),
        }
    }

    pub fn size_bytes(&self) -> u32 {
        match self {
            Packet::Data(d) => d.size_bytes(),
            Packet::Chra(m) => m.size_bytes(),
            Packet::Aodv(m) => m.size_bytes(),
        }
    }

    pub fn data_id(&self) -> Option<u64> {
        match self {
            Packet::Data(d) => Some(d.id),
            _ => None,
        }
    }
}

//! Control messages of the cluster-head routing protocol.

use std::collections::BTreeSet;

use crate::csa::SamPacket;
use crate::metrics::PacketKind;
use crate::network::NodeId;
use crate::packet::PathKey;

pub const CTRL_BASE_BYTES: u32 = 64;

fn path_bytes(p: &[NodeId]) -> u32 {
    p.len() as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub src: NodeId,
    pub dst: NodeId,
    pub seq: u64,
    /// Nodes traversed so far, source first.
    pub trail: Vec<NodeId>,
    /// Remaining relay hops toward the next cluster head.
    pub via: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    pub src: NodeId,
    pub dst: NodeId,
    pub seq: u64,
    /// Full end-to-end path, or `None` for a next-hop reply.
    pub path: Option<Vec<NodeId>>,
    /// Remaining hops back to the source.
    pub back: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdatedPath {
    pub src: NodeId,
    pub dst: NodeId,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    pub origin: NodeId,
    pub id: u64,
    pub lost: NodeId,
    pub loss_time: f64,
    /// False when only the link to `lost` broke (the destination moved away).
    pub purge: bool,
    pub notify: BTreeSet<NodeId>,
    pub updated: Option<UpdatedPath>,
    /// Physical hops travelled from the originating head.
    pub hops: u32,
    pub via: Vec<NodeId>,
    pub to_endpoint: bool,
    pub from_ch: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rpreq {
    pub originator: NodeId,
    pub lost: NodeId,
    pub key: PathKey,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rprep {
    pub originator: NodeId,
    pub key: PathKey,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamRelay {
    pub sam: SamPacket,
    /// CH-hops travelled when it reaches the next head.
    pub ch_hops: u32,
    pub via: Vec<NodeId>,
    pub from_ch: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChraMsg {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Rpreq(Rpreq),
    Rprep(Rprep),
    Sam(SamRelay),
    DvErr { src: NodeId, dst: NodeId },
}

impl ChraMsg {
    pub fn kind(&self) -> PacketKind {
        match self {
            ChraMsg::Rreq(_) => PacketKind::Rreq,
            ChraMsg::Rrep(_) => PacketKind::Rrep,
            ChraMsg::Rerr(_) => PacketKind::Rerr,
            ChraMsg::Rpreq(_) => PacketKind::Rpreq,
            ChraMsg::Rprep(_) => PacketKind::Rprep,
            ChraMsg::Sam(_) => PacketKind::Sam,
            ChraMsg::DvErr { .. } => PacketKind::DvErr,
        }
    }

    /// 64-byte base plus one byte per carried node id; SAMs grow with links.
    pub fn size_bytes(&self) -> u32 {
        match self {
            ChraMsg::Rreq(r) => CTRL_BASE_BYTES + path_bytes(&r.trail),
            ChraMsg::Rrep(r) => CTRL_BASE_BYTES + r.path.as_deref().map_or(0, path_bytes),
            ChraMsg::Rerr(r) => {
                CTRL_BASE_BYTES + r.notify.len() as u32 + r.updated.as_ref().map_or(0, |u| path_bytes(&u.path))
            }
            ChraMsg::Rpreq(r) => CTRL_BASE_BYTES + path_bytes(&r.path),
            ChraMsg::Rprep(r) => CTRL_BASE_BYTES + path_bytes(&r.path),
            ChraMsg::Sam(s) => s.sam.size_bytes(),
            ChraMsg::DvErr { .. } => CTRL_BASE_BYTES,
        }
    }
}

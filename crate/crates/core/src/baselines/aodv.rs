//! Flat on-demand distance-vector routing without hello messages.
//!
//! Route requests flood the whole network; only the destination replies.
//! Link breaks surface through failed unicasts or neighbour loss and are
//! reported upstream with a broadcast RERR to precursors.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::EventHandle;
use crate::metrics::PacketKind;
use crate::network::NodeId;
use crate::packet::{DataPacket, DataRoute, Packet};
use crate::routing::{Ctx, Timer};

pub const AODV_PACKET_BYTES: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum AodvMsg {
    Rreq {
        orig: NodeId,
        orig_seq: u64,
        rreq_id: u64,
        dst: NodeId,
        dst_seq: u64,
        hops: u32,
    },
    Rrep {
        orig: NodeId,
        dst: NodeId,
        dst_seq: u64,
        hops: u32,
    },
    Rerr {
        unreachable: Vec<(NodeId, u64)>,
    },
}

impl AodvMsg {
    pub fn kind(&self) -> PacketKind {
        match self {
            AodvMsg::Rreq { .. } => PacketKind::Rreq,
            AodvMsg::Rrep { .. } => PacketKind::Rrep,
            AodvMsg::Rerr { .. } => PacketKind::Rerr,
        }
    }

    pub fn size_bytes(&self) -> u32 {
        AODV_PACKET_BYTES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub next: NodeId,
    pub hops: u32,
    pub seq: u64,
    pub valid: bool,
    pub precursors: BTreeSet<NodeId>,
}

impl Route {
    /// Standard freshness: higher sequence wins, equal sequence fewer hops.
    fn improved_by(&self, seq: u64, hops: u32) -> bool {
        !self.valid || seq > self.seq || (seq == self.seq && hops < self.hops)
    }
}

#[derive(Debug, Clone, Default)]
struct Discovery {
    attempts: u32,
    id: u64,
    timer: Option<EventHandle>,
    buffer: Vec<DataPacket>,
}

#[derive(Debug, Clone, Default)]
struct AodvNode {
    seq: u64,
    rreq_id: u64,
    routes: BTreeMap<NodeId, Route>,
    seen: BTreeSet<(NodeId, u64)>,
    discovery: BTreeMap<NodeId, Discovery>,
}

#[derive(Debug, Clone)]
pub struct Aodv {
    nodes: Vec<AodvNode>,
}

impl Aodv {
    pub fn new(node_count: usize) -> Self {
        Self {
            nodes: vec![AodvNode::default(); node_count],
        }
    }

    pub fn route(&self, node: NodeId, dst: NodeId) -> Option<&Route> {
        self.nodes[node.idx()].routes.get(&dst).filter(|r| r.valid)
    }

    /// Node sequence of the installed route from `src` to `dst`.
    pub fn route_path(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        let mut path = vec![src];
        let mut cur = src;
        while cur != dst {
            cur = self.route(cur, dst)?.next;
            if path.contains(&cur) {
                return None;
            }
            path.push(cur);
        }
        Some(path)
    }

    pub fn on_app_send(&mut self, ctx: &mut Ctx, pkt: DataPacket) {
        let src = pkt.src;
        if src == pkt.dst {
            ctx.deliver(&pkt);
            return;
        }
        self.forward(ctx, src, pkt);
    }

    fn forward(&mut self, ctx: &mut Ctx, at: NodeId, mut pkt: DataPacket) {
        let dst = pkt.dst;
        let Some(route) = self.route(at, dst) else {
            if at == pkt.src {
                self.buffer(ctx, at, pkt);
            } else {
                ctx.drop_data(&pkt);
                self.break_routes(ctx, at, &[dst]);
            }
            return;
        };
        let next = route.next;
        pkt.route = DataRoute::HopByHop;
        if let Err(Packet::Data(p)) = ctx.transmit(at, next, Packet::Data(pkt)) {
            self.link_lost(ctx, at, next);
            if at == p.src {
                self.buffer(ctx, at, p);
            } else {
                ctx.drop_data(&p);
            }
        }
    }

    fn buffer(&mut self, ctx: &mut Ctx, src: NodeId, pkt: DataPacket) {
        let dst = pkt.dst;
        if let Some(d) = self.nodes[src.idx()].discovery.get_mut(&dst) {
            d.buffer.push(pkt);
            return;
        }
        self.nodes[src.idx()].discovery.insert(
            dst,
            Discovery {
                buffer: vec![pkt],
                ..Discovery::default()
            },
        );
        self.send_rreq(ctx, src, dst);
    }

    fn send_rreq(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId) {
        ctx.stats.discovery_attempts += 1;
        let n = &mut self.nodes[src.idx()];
        n.seq += 1;
        n.rreq_id += 1;
        let (orig_seq, rreq_id) = (n.seq, n.rreq_id);
        let dst_seq = n.routes.get(&dst).map_or(0, |r| r.seq);
        n.seen.insert((src, rreq_id));
        let timer = ctx.set_timer(ctx.params.discovery_timeout, src, Timer::Discovery { dst, seq: rreq_id });
        let d = n.discovery.get_mut(&dst).expect("discovery registered by caller");
        d.id = rreq_id;
        d.timer = Some(timer);
        ctx.broadcast(
            src,
            Packet::Aodv(AodvMsg::Rreq {
                orig: src,
                orig_seq,
                rreq_id,
                dst,
                dst_seq,
                hops: 0,
            }),
        );
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, node: NodeId, timer: Timer) {
        let Timer::Discovery { dst, seq } = timer else { return };
        let retries = ctx.params.discovery_retries;
        let n = &mut self.nodes[node.idx()];
        let Some(d) = n.discovery.get_mut(&dst) else { return };
        if d.id != seq {
            return;
        }
        if d.attempts < retries {
            d.attempts += 1;
            self.send_rreq(ctx, node, dst);
        } else {
            let d = n.discovery.remove(&dst).expect("checked above");
            for p in &d.buffer {
                ctx.drop_data(p);
            }
            ctx.stats.discovery_failures += 1;
        }
    }

    fn update_route(&mut self, at: NodeId, dst: NodeId, next: NodeId, hops: u32, seq: u64) -> bool {
        let routes = &mut self.nodes[at.idx()].routes;
        match routes.get_mut(&dst) {
            Some(r) if !r.improved_by(seq, hops) => false,
            Some(r) => {
                r.next = next;
                r.hops = hops;
                r.seq = seq;
                r.valid = true;
                true
            }
            None => {
                routes.insert(
                    dst,
                    Route {
                        next,
                        hops,
                        seq,
                        valid: true,
                        precursors: BTreeSet::new(),
                    },
                );
                true
            }
        }
    }

    pub fn on_packet(&mut self, ctx: &mut Ctx, at: NodeId, from: NodeId, msg: AodvMsg) {
        match msg {
            AodvMsg::Rreq {
                orig,
                orig_seq,
                rreq_id,
                dst,
                dst_seq,
                hops,
            } => {
                if !self.nodes[at.idx()].seen.insert((orig, rreq_id)) {
                    return;
                }
                self.update_route(at, orig, from, hops + 1, orig_seq);
                if at == dst {
                    let n = &mut self.nodes[at.idx()];
                    n.seq = n.seq.max(dst_seq) + 1;
                    let rrep = AodvMsg::Rrep {
                        orig,
                        dst,
                        dst_seq: n.seq,
                        hops: 0,
                    };
                    self.send_toward(ctx, at, orig, rrep);
                } else {
                    ctx.broadcast(
                        at,
                        Packet::Aodv(AodvMsg::Rreq {
                            orig,
                            orig_seq,
                            rreq_id,
                            dst,
                            dst_seq,
                            hops: hops + 1,
                        }),
                    );
                }
            }
            AodvMsg::Rrep {
                orig,
                dst,
                dst_seq,
                hops,
            } => {
                if !self.update_route(at, dst, from, hops + 1, dst_seq) {
                    return;
                }
                if at == orig {
                    self.route_ready(ctx, at, dst);
                    return;
                }
                let back = self.route(at, orig).map(|r| r.next);
                if let Some(back) = back {
                    let n = &mut self.nodes[at.idx()];
                    if let Some(r) = n.routes.get_mut(&dst) {
                        r.precursors.insert(back);
                    }
                    if let Some(r) = n.routes.get_mut(&orig) {
                        r.precursors.insert(from);
                    }
                }
                let fwd = AodvMsg::Rrep {
                    orig,
                    dst,
                    dst_seq,
                    hops: hops + 1,
                };
                self.send_toward(ctx, at, orig, fwd);
            }
            AodvMsg::Rerr { unreachable } => {
                let n = &mut self.nodes[at.idx()];
                let mut lost = Vec::new();
                for (dst, seq) in unreachable {
                    if let Some(r) = n.routes.get_mut(&dst) {
                        if r.valid && r.next == from {
                            r.valid = false;
                            r.seq = r.seq.max(seq);
                            if !r.precursors.is_empty() {
                                lost.push((dst, r.seq));
                            }
                        }
                    }
                }
                if !lost.is_empty() {
                    ctx.broadcast(at, Packet::Aodv(AodvMsg::Rerr { unreachable: lost }));
                }
            }
        }
    }

    fn send_toward(&mut self, ctx: &mut Ctx, at: NodeId, dst: NodeId, msg: AodvMsg) {
        let Some(next) = self.route(at, dst).map(|r| r.next) else { return };
        if ctx.transmit(at, next, Packet::Aodv(msg)).is_err() {
            self.link_lost(ctx, at, next);
        }
    }

    fn route_ready(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId) {
        let Some(d) = self.nodes[src.idx()].discovery.remove(&dst) else { return };
        if let Some(t) = d.timer {
            ctx.cancel(t);
        }
        for p in d.buffer {
            self.forward(ctx, src, p);
        }
    }

    pub fn on_data(&mut self, ctx: &mut Ctx, at: NodeId, mut pkt: DataPacket) {
        pkt.hops += 1;
        if at == pkt.dst {
            ctx.deliver(&pkt);
            return;
        }
        self.forward(ctx, at, pkt);
    }

    /// Invalidates every route through `next` and tells the precursors.
    pub fn link_lost(&mut self, ctx: &mut Ctx, at: NodeId, next: NodeId) {
        let dsts: Vec<NodeId> = self.nodes[at.idx()]
            .routes
            .iter()
            .filter(|(_, r)| r.valid && r.next == next)
            .map(|(&d, _)| d)
            .collect();
        self.break_routes(ctx, at, &dsts);
    }

    fn break_routes(&mut self, ctx: &mut Ctx, at: NodeId, dsts: &[NodeId]) {
        let n = &mut self.nodes[at.idx()];
        let mut lost = Vec::new();
        for d in dsts {
            if let Some(r) = n.routes.get_mut(d) {
                let had_precursors = !r.precursors.is_empty();
                if r.valid {
                    r.valid = false;
                    r.seq += 1;
                }
                if had_precursors {
                    lost.push((*d, r.seq));
                }
            }
        }
        if !lost.is_empty() {
            ctx.broadcast(at, Packet::Aodv(AodvMsg::Rerr { unreachable: lost }));
        }
    }

    /// Neighbour loss noticed by the keep-alive machinery: routes are
    /// invalidated silently, the next use reports the break.
    pub fn on_neighbor_lost(&mut self, at: NodeId, lost: NodeId) {
        for r in self.nodes[at.idx()].routes.values_mut() {
            if r.valid && r.next == lost {
                r.valid = false;
                r.seq += 1;
            }
        }
    }
}

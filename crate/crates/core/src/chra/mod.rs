//! Cluster-head routing with plane separation.
//!
//! Heads answer route requests from their sight area with a full end-to-end
//! path (user plane, source-routed over any nodes) or, when the destination is
//! out of sight, with next-hop entries along the backbone. The same machinery
//! with plane separation switched off is the backbone-only baseline.

pub mod msg;
pub mod path;

use std::collections::{BTreeMap, BTreeSet};

use crate::csa::{
    head_chain_options, local_topology, purge_lost_node, sam_due_rings, BanList, SamPacket, VisibilityMatrix,
};
use crate::engine::EventHandle;
use crate::network::NodeId;
use crate::packet::{DataPacket, DataRoute, Packet, PathKey};
use crate::routing::{Ctx, Timer};

use msg::{ChraMsg, Rerr, Rpreq, Rprep, Rrep, Rreq, SamRelay, UpdatedPath};
use path::shortest_path;

/// Minimum spacing between repair attempts for the same route at one node.
const REPAIR_HOLDOFF: f64 = 1.0;

/// Hop limit for data following next-hop entries; stale entries can form loops.
pub const MAX_DATA_HOPS: u32 = 32;

/// One copy per adjacent head not excluded by `skip`. When the first hop of
/// the preferred gateway chain is gone the next chain is tried.
fn send_to_heads(
    ctx: &mut Ctx,
    ch: NodeId,
    skip: impl Fn(NodeId) -> bool,
    mut make: impl FnMut(Vec<NodeId>) -> ChraMsg,
) {
    for (head, chains) in head_chain_options(ch, ctx.clustering, ctx.now) {
        if skip(head) {
            continue;
        }
        for chain in chains {
            let msg = make(chain[1..].to_vec());
            if ctx.transmit(ch, chain[0], Packet::Chra(msg)).is_ok() {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eep {
    pub path: Vec<NodeId>,
    pub key: PathKey,
    seq: u64,
}

#[derive(Debug, Clone)]
struct Cached {
    path: Vec<NodeId>,
    /// Key to forward under; differs from the lookup key after a local patch.
    out: PathKey,
}

#[derive(Debug, Clone, Default)]
struct Discovery {
    seq: u64,
    attempts: u32,
    timer: Option<EventHandle>,
    buffer: Vec<DataPacket>,
}

#[derive(Debug, Clone)]
struct Repair {
    timer: EventHandle,
    buffer: Vec<DataPacket>,
}

#[derive(Debug, Clone, Default)]
struct NodeRoutes {
    /// End-to-end paths keyed by the far endpoint.
    eeps: BTreeMap<NodeId, Eep>,
    /// Long-distance first hop for flows this node originates.
    src_dv: BTreeMap<NodeId, NodeId>,
    /// Backbone distance vector: destination -> next hop.
    dv: BTreeMap<NodeId, NodeId>,
    /// Backbone: (src, dst) -> next hop back toward the source.
    upstream: BTreeMap<(NodeId, NodeId), NodeId>,
    cache: BTreeMap<PathKey, Cached>,
    header_sent: BTreeSet<(PathKey, NodeId)>,
    discovery: BTreeMap<NodeId, Discovery>,
    resolved: BTreeMap<NodeId, u64>,
    /// When each destination's last discovery completed.
    resolved_at: BTreeMap<NodeId, f64>,
    repairs: BTreeMap<PathKey, Repair>,
    failed: BTreeMap<PathKey, f64>,
    active: BTreeSet<NodeId>,
    seq: u64,
}

#[derive(Debug, Clone)]
struct HeadState {
    vm: VisibilityMatrix,
    ban: BanList,
    /// Routes handed out by this head, keyed by (src, dst).
    source_requests: BTreeMap<(NodeId, NodeId), Vec<NodeId>>,
    rreq_seen: BTreeSet<(NodeId, u64)>,
    rerr_seen: BTreeSet<(NodeId, u64)>,
    sam_seen: BTreeMap<NodeId, (u64, u32)>,
    sam_seq: u64,
}

impl HeadState {
    fn new(owner: NodeId) -> Self {
        Self {
            vm: VisibilityMatrix::new(owner),
            ban: BanList::default(),
            source_requests: BTreeMap::new(),
            rreq_seen: BTreeSet::new(),
            rerr_seen: BTreeSet::new(),
            sam_seen: BTreeMap::new(),
            sam_seq: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chra {
    plane_separation: bool,
    nodes: Vec<NodeRoutes>,
    heads: BTreeMap<NodeId, HeadState>,
    next_version: u64,
    next_rerr: u64,
}

impl Chra {
    pub fn new(node_count: usize, plane_separation: bool) -> Self {
        Self {
            plane_separation,
            nodes: vec![NodeRoutes::default(); node_count],
            heads: BTreeMap::new(),
            next_version: 0,
            next_rerr: 0,
        }
    }

    pub fn plane_separation(&self) -> bool {
        self.plane_separation
    }

    /// Stored end-to-end path at `node` toward `dst`.
    pub fn eep(&self, node: NodeId, dst: NodeId) -> Option<&Eep> {
        self.nodes[node.idx()].eeps.get(&dst)
    }

    pub fn eeps(&self, node: NodeId) -> impl Iterator<Item = (&NodeId, &Eep)> {
        self.nodes[node.idx()].eeps.iter()
    }

    pub fn dv_next(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.nodes[node.idx()].dv.get(&dst).copied()
    }

    pub fn visibility(&self, ch: NodeId) -> Option<&VisibilityMatrix> {
        self.heads.get(&ch).map(|h| &h.vm)
    }

    pub fn ban_list(&self, ch: NodeId) -> Option<&BanList> {
        self.heads.get(&ch).map(|h| &h.ban)
    }

    fn head(&mut self, ch: NodeId) -> &mut HeadState {
        self.heads.entry(ch).or_insert_with(|| HeadState::new(ch))
    }

    fn mint(&mut self, src: NodeId, dst: NodeId) -> PathKey {
        self.next_version += 1;
        PathKey {
            src,
            dst,
            version: self.next_version,
        }
    }

    // ---- application side -------------------------------------------------

    pub fn on_app_send(&mut self, ctx: &mut Ctx, pkt: DataPacket) {
        self.nodes[pkt.src.idx()].active.insert(pkt.dst);
        self.send_from_source(ctx, pkt.src, pkt);
    }

    fn send_from_source(&mut self, ctx: &mut Ctx, src: NodeId, mut pkt: DataPacket) {
        let dst = pkt.dst;
        if src == dst {
            ctx.deliver(&pkt);
            return;
        }
        if self.plane_separation {
            if let Some(e) = self.nodes[src.idx()].eeps.get(&dst) {
                let (path, key) = (e.path.clone(), e.key);
                self.forward_source(ctx, src, pkt, path, key, key);
                return;
            }
        }
        if let Some(&next) = self.nodes[src.idx()].src_dv.get(&dst) {
            pkt.route = DataRoute::Backbone;
            if let Err(Packet::Data(p)) = ctx.transmit(src, next, Packet::Data(pkt)) {
                let r = &mut self.nodes[src.idx()];
                r.src_dv.remove(&dst);
                r.dv.remove(&dst);
                self.buffer_for_discovery(ctx, src, p);
            }
            return;
        }
        self.buffer_for_discovery(ctx, src, pkt);
    }

    fn buffer_for_discovery(&mut self, ctx: &mut Ctx, src: NodeId, pkt: DataPacket) {
        let dst = pkt.dst;
        let r = &mut self.nodes[src.idx()];
        if let Some(d) = r.discovery.get_mut(&dst) {
            d.buffer.push(pkt);
        } else if r.resolved_at.get(&dst) == Some(&ctx.now) {
            // the route handed out this instant is already broken
            ctx.drop_data(&pkt);
        } else {
            self.start_discovery(ctx, src, dst, vec![pkt]);
        }
    }

    fn start_discovery(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId, buffer: Vec<DataPacket>) {
        let r = &mut self.nodes[src.idx()];
        r.seq += 1;
        let seq = r.seq;
        let timer = ctx.set_timer(ctx.params.discovery_timeout, src, Timer::Discovery { dst, seq });
        r.discovery.insert(
            dst,
            Discovery {
                seq,
                attempts: 0,
                timer: Some(timer),
                buffer,
            },
        );
        self.send_rreq(ctx, src, dst, seq);
    }

    fn send_rreq(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId, seq: u64) {
        ctx.stats.discovery_attempts += 1;
        let rreq = Rreq {
            src,
            dst,
            seq,
            trail: vec![src],
            via: Vec::new(),
        };
        let ch = ctx.clustering.ch_of(src);
        if ch == src {
            self.rreq_at_ch(ctx, src, rreq);
        } else {
            let _ = ctx.transmit(src, ch, Packet::Chra(ChraMsg::Rreq(rreq)));
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, node: NodeId, timer: Timer) {
        match timer {
            Timer::Discovery { dst, seq } => self.discovery_timeout(ctx, node, dst, seq),
            Timer::Repair { key } => self.repair_timeout(ctx, node, key),
        }
    }

    fn discovery_timeout(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId, seq: u64) {
        let retries = ctx.params.discovery_retries;
        let r = &mut self.nodes[src.idx()];
        let Some(d) = r.discovery.get_mut(&dst) else { return };
        if d.seq != seq {
            return;
        }
        if d.attempts < retries {
            r.seq += 1;
            let seq = r.seq;
            d.attempts += 1;
            d.seq = seq;
            d.timer = Some(ctx.set_timer(ctx.params.discovery_timeout, src, Timer::Discovery { dst, seq }));
            self.send_rreq(ctx, src, dst, seq);
        } else {
            let d = r.discovery.remove(&dst).expect("checked above");
            for p in &d.buffer {
                ctx.drop_data(p);
            }
            ctx.stats.discovery_failures += 1;
        }
    }

    // ---- control plane: discovery -----------------------------------------

    pub fn on_packet(&mut self, ctx: &mut Ctx, at: NodeId, from: NodeId, msg: ChraMsg) {
        match msg {
            ChraMsg::Rreq(mut r) => {
                r.trail.push(at);
                if !r.via.is_empty() {
                    let next = r.via.remove(0);
                    let _ = ctx.transmit(at, next, Packet::Chra(ChraMsg::Rreq(r)));
                } else if ctx.clustering.is_ch(at) {
                    self.rreq_at_ch(ctx, at, r);
                }
            }
            ChraMsg::Rrep(r) => self.on_rrep(ctx, at, from, r),
            ChraMsg::Rerr(mut r) => {
                r.hops += 1;
                if !r.via.is_empty() {
                    let next = r.via.remove(0);
                    let _ = ctx.transmit(at, next, Packet::Chra(ChraMsg::Rerr(r)));
                } else if r.to_endpoint {
                    self.rerr_at_endpoint(ctx, at, &r);
                } else if ctx.clustering.is_ch(at) {
                    self.rerr_at_ch(ctx, at, r);
                }
            }
            ChraMsg::Rpreq(r) => {
                if ctx.clustering.is_ch(at) {
                    self.rpreq_at_ch(ctx, at, r);
                }
            }
            ChraMsg::Rprep(r) => {
                if r.originator == at {
                    self.rprep_at_originator(ctx, at, r);
                }
            }
            ChraMsg::Sam(mut s) => {
                if !s.via.is_empty() {
                    let next = s.via.remove(0);
                    let _ = ctx.transmit(at, next, Packet::Chra(ChraMsg::Sam(s)));
                } else if ctx.clustering.is_ch(at) {
                    self.sam_at_ch(ctx, at, s);
                }
            }
            ChraMsg::DvErr { src, dst } => self.on_dv_err(ctx, at, src, dst),
        }
    }

    fn rreq_at_ch(&mut self, ctx: &mut Ctx, ch: NodeId, rreq: Rreq) {
        if !self.head(ch).rreq_seen.insert((rreq.src, rreq.seq)) {
            return;
        }
        let (src, dst) = (rreq.src, rreq.dst);
        if self.plane_separation {
            let h = &self.heads[&ch];
            if h.vm.knows(src) && h.vm.knows(dst) {
                if let Some(p) = shortest_path(&h.vm.adjacency(), src, dst, &BTreeSet::new()) {
                    if p.len() - 1 <= ctx.params.max_eep_hops() {
                        self.head(ch).source_requests.insert((src, dst), p.clone());
                        self.reply(ctx, ch, &rreq, Some(p));
                        return;
                    }
                    ctx.stats.cap_rejections += 1;
                }
            }
        }
        let member = dst != ch && ctx.clustering.ch_of(dst) == ch && ctx.clustering.report(ch, dst, ctx.now).is_some();
        if member {
            self.nodes[ch.idx()].dv.insert(dst, dst);
        }
        if dst == ch || member || self.nodes[ch.idx()].dv.contains_key(&dst) {
            self.reply(ctx, ch, &rreq, None);
            return;
        }
        send_to_heads(ctx, ch, |h| rreq.trail.contains(&h), |via| {
            let mut r = rreq.clone();
            r.via = via;
            ChraMsg::Rreq(r)
        });
    }

    fn reply(&mut self, ctx: &mut Ctx, responder: NodeId, rreq: &Rreq, path: Option<Vec<NodeId>>) {
        let mut back: Vec<NodeId> = rreq.trail.iter().rev().skip(1).copied().collect();
        if path.is_none() {
            if let Some(&up) = back.first() {
                self.nodes[responder.idx()].upstream.insert((rreq.src, rreq.dst), up);
            }
        }
        let mut rrep = Rrep {
            src: rreq.src,
            dst: rreq.dst,
            seq: rreq.seq,
            path,
            back: Vec::new(),
        };
        if back.is_empty() {
            self.rrep_at_source(ctx, responder, responder, rrep);
            return;
        }
        let next = back.remove(0);
        rrep.back = back;
        let _ = ctx.transmit(responder, next, Packet::Chra(ChraMsg::Rrep(rrep)));
    }

    fn on_rrep(&mut self, ctx: &mut Ctx, at: NodeId, from: NodeId, mut rrep: Rrep) {
        if rrep.path.is_none() && at != rrep.src {
            let r = &mut self.nodes[at.idx()];
            r.dv.insert(rrep.dst, from);
            if let Some(&up) = rrep.back.first() {
                r.upstream.insert((rrep.src, rrep.dst), up);
            }
        }
        if rrep.back.is_empty() {
            if at == rrep.src {
                self.rrep_at_source(ctx, at, from, rrep);
            }
            return;
        }
        let next = rrep.back.remove(0);
        let _ = ctx.transmit(at, next, Packet::Chra(ChraMsg::Rrep(rrep)));
    }

    fn rrep_at_source(&mut self, ctx: &mut Ctx, src: NodeId, from: NodeId, rrep: Rrep) {
        let dst = rrep.dst;
        let seq = rrep.seq;
        let r = &self.nodes[src.idx()];
        let current = r.discovery.get(&dst).map(|d| d.seq) == Some(seq);
        if !current && r.resolved.get(&dst) != Some(&seq) {
            return;
        }
        match rrep.path {
            Some(p) => {
                let better = r.eeps.get(&dst).is_none_or(|e| e.seq != seq || p.len() < e.path.len());
                if better {
                    let key = self.mint(src, dst);
                    ctx.stats.note_eep(p.len() - 1);
                    self.nodes[src.idx()].eeps.insert(dst, Eep { path: p, key, seq });
                }
            }
            None => {
                let r = &mut self.nodes[src.idx()];
                let next = if from == src { r.dv.get(&dst).copied() } else { Some(from) };
                if let Some(next) = next {
                    r.src_dv.insert(dst, next);
                }
            }
        }
        let r = &mut self.nodes[src.idx()];
        if let Some(d) = r.discovery.remove(&dst) {
            if let Some(t) = d.timer {
                ctx.cancel(t);
            }
            r.resolved.insert(dst, seq);
            r.resolved_at.insert(dst, ctx.now);
            for p in d.buffer {
                self.send_from_source(ctx, src, p);
            }
        }
    }

    // ---- user plane --------------------------------------------------------

    fn forward_source(
        &mut self,
        ctx: &mut Ctx,
        node: NodeId,
        mut pkt: DataPacket,
        path: Vec<NodeId>,
        in_key: PathKey,
        out: PathKey,
    ) {
        let next = path.iter().position(|&v| v == node).and_then(|i| path.get(i + 1)).copied();
        let Some(next) = next else {
            ctx.drop_data(&pkt);
            return;
        };
        let r = &mut self.nodes[node.idx()];
        let header = !r.header_sent.contains(&(out, next));
        pkt.route = DataRoute::Source {
            key: out,
            header: header.then(|| path.clone()),
        };
        match ctx.transmit(node, next, Packet::Data(pkt)) {
            Ok(()) => {
                if header {
                    self.nodes[node.idx()].header_sent.insert((out, next));
                }
            }
            Err(Packet::Data(p)) => self.link_break(ctx, node, next, p, path, in_key),
            Err(_) => unreachable!("data in, data out"),
        }
    }

    pub fn on_data(&mut self, ctx: &mut Ctx, at: NodeId, mut pkt: DataPacket) {
        pkt.hops += 1;
        match pkt.route.clone() {
            DataRoute::Source { key, header } => {
                let r = &mut self.nodes[at.idx()];
                if let Some(p) = &header {
                    r.cache.entry(key).or_insert_with(|| Cached {
                        path: p.clone(),
                        out: key,
                    });
                }
                if at == pkt.dst {
                    if let Some(p) = header {
                        if !r.eeps.contains_key(&pkt.src) {
                            let rev: Vec<NodeId> = p.into_iter().rev().collect();
                            let k = self.mint(at, pkt.src);
                            self.nodes[at.idx()].eeps.insert(pkt.src, Eep { path: rev, key: k, seq: 0 });
                        }
                    }
                    ctx.deliver(&pkt);
                    return;
                }
                if let Some(rep) = r.repairs.get_mut(&key) {
                    rep.buffer.push(pkt);
                    return;
                }
                if r.failed.get(&key).is_some_and(|&t| ctx.now - t < REPAIR_HOLDOFF) {
                    ctx.drop_data(&pkt);
                    return;
                }
                match r.cache.get(&key) {
                    Some(c) => {
                        let (path, out) = (c.path.clone(), c.out);
                        self.forward_source(ctx, at, pkt, path, key, out);
                    }
                    None => ctx.drop_data(&pkt),
                }
            }
            DataRoute::Backbone => {
                if at == pkt.dst {
                    ctx.deliver(&pkt);
                    return;
                }
                let (src, dst) = (pkt.src, pkt.dst);
                if pkt.hops >= MAX_DATA_HOPS {
                    ctx.drop_data(&pkt);
                    self.dv_break(ctx, at, src, dst);
                    return;
                }
                let Some(&next) = self.nodes[at.idx()].dv.get(&dst) else {
                    ctx.drop_data(&pkt);
                    self.dv_break(ctx, at, src, dst);
                    return;
                };
                if let Err(Packet::Data(p)) = ctx.transmit(at, next, Packet::Data(pkt)) {
                    ctx.drop_data(&p);
                    self.dv_break(ctx, at, src, dst);
                }
            }
            DataRoute::HopByHop => ctx.drop_data(&pkt),
        }
    }

    fn dv_break(&mut self, ctx: &mut Ctx, at: NodeId, src: NodeId, dst: NodeId) {
        let r = &mut self.nodes[at.idx()];
        r.dv.remove(&dst);
        if let Some(up) = r.upstream.remove(&(src, dst)) {
            let _ = ctx.transmit(at, up, Packet::Chra(ChraMsg::DvErr { src, dst }));
        }
    }

    fn on_dv_err(&mut self, ctx: &mut Ctx, at: NodeId, src: NodeId, dst: NodeId) {
        if at == src {
            let r = &mut self.nodes[at.idx()];
            r.src_dv.remove(&dst);
            r.dv.remove(&dst);
            self.rediscover_if_active(ctx, at, dst);
            return;
        }
        self.dv_break(ctx, at, src, dst);
    }

    fn rediscover_if_active(&mut self, ctx: &mut Ctx, src: NodeId, dst: NodeId) {
        let r = &self.nodes[src.idx()];
        let routed = r.src_dv.contains_key(&dst) || (self.plane_separation && r.eeps.contains_key(&dst));
        if r.active.contains(&dst) && !r.discovery.contains_key(&dst) && !routed {
            self.start_discovery(ctx, src, dst, Vec::new());
        }
    }

    // ---- repair ------------------------------------------------------------

    fn link_break(&mut self, ctx: &mut Ctx, u: NodeId, v: NodeId, pkt: DataPacket, path: Vec<NodeId>, key: PathKey) {
        let r = &mut self.nodes[u.idx()];
        if r.failed.get(&key).is_some_and(|&t| ctx.now - t < REPAIR_HOLDOFF) {
            ctx.drop_data(&pkt);
            return;
        }
        if let Some(rep) = r.repairs.get_mut(&key) {
            rep.buffer.push(pkt);
            return;
        }
        let timer = ctx.set_timer(ctx.params.repair_timeout, u, Timer::Repair { key });
        r.repairs.insert(
            key,
            Repair {
                timer,
                buffer: vec![pkt],
            },
        );
        let rq = Rpreq {
            originator: u,
            lost: v,
            key,
            path,
        };
        let ch = ctx.clustering.ch_of(u);
        if ch == u {
            self.rpreq_at_ch(ctx, u, rq);
        } else if ctx.transmit(u, ch, Packet::Chra(ChraMsg::Rpreq(rq))).is_err() {
            ctx.cancel(timer);
            self.repair_timeout(ctx, u, key);
        }
    }

    fn rpreq_at_ch(&mut self, ctx: &mut Ctx, ch: NodeId, rq: Rpreq) {
        let (u, v, path) = (rq.originator, rq.lost, rq.path);
        let Some(i) = path.iter().position(|&x| x == u) else { return };
        if path.get(i + 1) != Some(&v) {
            return;
        }
        let (src, dst) = (path[0], *path.last().expect("non-empty"));
        let (now, t_ban, cap) = (ctx.now, ctx.params.t_ban, ctx.params.max_eep_hops());
        let h = self.head(ch);
        h.vm.remove_link(u, v);

        if v != dst {
            let after = path[i + 2];
            let adj = h.vm.adjacency();
            let x = adj.get(&u).and_then(|nu| {
                nu.iter().copied().find(|x| {
                    !path.contains(x)
                        && !h.ban.is_banned(*x, now, t_ban)
                        && adj.get(x).is_some_and(|nx| nx.contains(&after))
                })
            });
            if let Some(x) = x {
                let mut patched = path.clone();
                patched[i + 1] = x;
                for p in h.source_requests.values_mut() {
                    if *p == path {
                        *p = patched.clone();
                    }
                }
                ctx.stats.repairs_two_hop += 1;
                self.send_rprep(ctx, ch, u, rq.key, patched);
                return;
            }
            purge_lost_node(&mut h.vm, &mut h.ban, v, now);
        }

        let blocked: BTreeSet<NodeId> = path[..i].iter().copied().collect();
        let suffix = if h.vm.knows(u) && h.vm.knows(dst) {
            shortest_path(&h.vm.adjacency(), u, dst, &blocked)
        } else {
            None
        };
        let notify = BTreeSet::from([src, dst]);
        match suffix.filter(|s| i + s.len() - 1 <= cap) {
            Some(s) => {
                let mut rebuilt = path[..i].to_vec();
                rebuilt.extend(s);
                h.source_requests.insert((src, dst), rebuilt.clone());
                ctx.stats.repairs_full += 1;
                self.send_rprep(ctx, ch, u, rq.key, rebuilt.clone());
                let updated = UpdatedPath {
                    src,
                    dst,
                    path: rebuilt,
                };
                self.originate_rerr(ctx, ch, v, v != dst, notify, Some(updated));
            }
            None => {
                ctx.stats.repairs_failed += 1;
                self.originate_rerr(ctx, ch, v, v != dst, notify, None);
            }
        }
    }

    fn send_rprep(&mut self, ctx: &mut Ctx, ch: NodeId, originator: NodeId, key: PathKey, path: Vec<NodeId>) {
        let rp = Rprep { originator, key, path };
        if ch == originator {
            self.rprep_at_originator(ctx, ch, rp);
        } else {
            let _ = ctx.transmit(ch, originator, Packet::Chra(ChraMsg::Rprep(rp)));
        }
    }

    fn rprep_at_originator(&mut self, ctx: &mut Ctx, u: NodeId, rp: Rprep) {
        let Some(rep) = self.nodes[u.idx()].repairs.remove(&rp.key) else { return };
        ctx.cancel(rep.timer);
        let (src, dst) = (rp.key.src, rp.key.dst);
        let out = self.mint(src, dst);
        ctx.stats.note_eep(rp.path.len() - 1);
        let r = &mut self.nodes[u.idx()];
        r.cache.insert(
            rp.key,
            Cached {
                path: rp.path.clone(),
                out,
            },
        );
        let mut in_key = rp.key;
        if u == src {
            if let Some(e) = r.eeps.get_mut(&dst) {
                if e.key == rp.key {
                    e.path = rp.path.clone();
                    e.key = out;
                    in_key = out;
                }
            }
        }
        for p in rep.buffer {
            self.forward_source(ctx, u, p, rp.path.clone(), in_key, out);
        }
    }

    fn repair_timeout(&mut self, ctx: &mut Ctx, u: NodeId, key: PathKey) {
        let r = &mut self.nodes[u.idx()];
        let Some(rep) = r.repairs.remove(&key) else { return };
        r.failed.insert(key, ctx.now);
        if u == key.src && r.eeps.get(&key.dst).is_some_and(|e| e.key == key) {
            r.eeps.remove(&key.dst);
        }
        for p in &rep.buffer {
            ctx.drop_data(p);
        }
    }

    // ---- route errors ------------------------------------------------------

    fn originate_rerr(
        &mut self,
        ctx: &mut Ctx,
        ch: NodeId,
        lost: NodeId,
        purge: bool,
        notify: BTreeSet<NodeId>,
        updated: Option<UpdatedPath>,
    ) {
        self.next_rerr += 1;
        let rerr = Rerr {
            origin: ch,
            id: self.next_rerr,
            lost,
            loss_time: ctx.now,
            purge,
            notify,
            updated,
            hops: 0,
            via: Vec::new(),
            to_endpoint: false,
            from_ch: ch,
        };
        self.rerr_at_ch(ctx, ch, rerr);
    }

    fn rerr_at_ch(&mut self, ctx: &mut Ctx, ch: NodeId, mut rerr: Rerr) {
        let h = self.head(ch);
        if !h.rerr_seen.insert((rerr.origin, rerr.id)) {
            return;
        }
        *ctx.stats.rerr_processing.entry((rerr.origin, rerr.id)).or_default() += 1;
        let lost = rerr.lost;
        if rerr.purge {
            purge_lost_node(&mut h.vm, &mut h.ban, lost, rerr.loss_time);
        }
        let stale: Vec<(NodeId, NodeId)> = h
            .source_requests
            .iter()
            .filter(|(_, p)| p.contains(&lost))
            .map(|(&k, _)| k)
            .collect();
        for (s, d) in stale {
            rerr.notify.insert(s);
            rerr.notify.insert(d);
            match &rerr.updated {
                Some(u) if u.src == s && u.dst == d => {
                    h.source_requests.insert((s, d), u.path.clone());
                }
                _ => {
                    h.source_requests.remove(&(s, d));
                }
            }
        }
        self.nodes[ch.idx()].dv.retain(|_, n| *n != lost);

        send_to_heads(ctx, ch, |h| h == rerr.from_ch || h == rerr.origin, |via| {
            let mut copy = rerr.clone();
            copy.via = via;
            copy.from_ch = ch;
            ChraMsg::Rerr(copy)
        });

        let cap = ctx.params.max_eep_hops();
        for &e in &rerr.notify {
            if e == ch {
                if rerr.hops as usize <= cap {
                    self.rerr_at_endpoint(ctx, ch, &rerr);
                }
            } else if ctx.clustering.ch_of(e) == ch
                && ctx.clustering.report(ch, e, ctx.now).is_some()
                && (rerr.hops as usize) < cap
            {
                let mut copy = rerr.clone();
                copy.via.clear();
                copy.to_endpoint = true;
                let _ = ctx.transmit(ch, e, Packet::Chra(ChraMsg::Rerr(copy)));
            }
        }
    }

    fn rerr_at_endpoint(&mut self, ctx: &mut Ctx, e: NodeId, rerr: &Rerr) {
        ctx.stats.rerr_endpoint_hops.push(rerr.hops);
        let mut fresh: Option<NodeId> = None;
        if let Some(u) = &rerr.updated {
            let (far, path) = if e == u.src {
                (Some(u.dst), u.path.clone())
            } else if e == u.dst {
                (Some(u.src), u.path.iter().rev().copied().collect())
            } else {
                (None, Vec::new())
            };
            if let Some(far) = far {
                let key = self.mint(e, far);
                let seq = self.nodes[e.idx()].eeps.get(&far).map_or(0, |x| x.seq);
                ctx.stats.note_eep(path.len() - 1);
                self.nodes[e.idx()].eeps.insert(far, Eep { path, key, seq });
                fresh = Some(far);
            }
        }
        let lost = rerr.lost;
        let dead: Vec<NodeId> = self.nodes[e.idx()]
            .eeps
            .iter()
            .filter(|(&far, ep)| Some(far) != fresh && ep.path.contains(&lost))
            .map(|(&far, _)| far)
            .collect();
        for far in dead {
            self.nodes[e.idx()].eeps.remove(&far);
            self.rediscover_if_active(ctx, e, far);
        }
    }

    // ---- sight area maintenance --------------------------------------------

    fn refresh_local(&mut self, ctx: &Ctx, ch: NodeId) {
        let (members, links) = local_topology(ch, ctx.clustering, ctx.now);
        let t_ban = ctx.params.t_ban;
        let now = ctx.now;
        let h = self.head(ch);
        h.vm.set_local(members, links, now, &h.ban, t_ban);
    }

    /// Periodic fish-eye SAM origination at every head.
    pub fn on_sam_round(&mut self, ctx: &mut Ctx) {
        if !self.plane_separation {
            return;
        }
        let due = sam_due_rings(ctx.now, ctx.params.t_sam, ctx.params.n);
        let Some(&ttl) = due.iter().max() else { return };
        let expiry = ctx.params.sam_expiry();
        for ch in ctx.clustering.assignment().cluster_heads() {
            if !ctx.channel.is_alive(ch) {
                continue;
            }
            self.refresh_local(ctx, ch);
            let (now, t_ban) = (ctx.now, ctx.params.t_ban);
            let h = self.head(ch);
            h.vm.expire(now, expiry);
            h.ban.expire(now, t_ban);
            h.sam_seq += 1;
            let own = &h.vm.entries()[&ch];
            let sam = SamPacket {
                origin_ch: ch,
                members: own.members.clone(),
                links: own.links.clone(),
                seq: h.sam_seq,
                ttl_ch_hops: ttl,
                timestamp: now,
            };
            send_to_heads(ctx, ch, |_| false, |via| {
                ChraMsg::Sam(SamRelay {
                    sam: sam.clone(),
                    ch_hops: 1,
                    via,
                    from_ch: ch,
                })
            });
        }
    }

    fn sam_at_ch(&mut self, ctx: &mut Ctx, ch: NodeId, relay: SamRelay) {
        let sam = &relay.sam;
        let origin = sam.origin_ch;
        if origin == ch {
            return;
        }
        let (now, t_ban) = (ctx.now, ctx.params.t_ban);
        let remaining = sam.ttl_ch_hops.saturating_sub(relay.ch_hops);
        let h = self.head(ch);
        if let Some(&(seq, rem)) = h.sam_seen.get(&origin) {
            if seq > sam.seq || (seq == sam.seq && rem >= remaining) {
                return;
            }
        }
        h.sam_seen.insert(origin, (sam.seq, remaining));
        h.vm.apply_sam(sam, relay.ch_hops, &h.ban, now, t_ban);
        if remaining == 0 {
            return;
        }
        send_to_heads(ctx, ch, |h| h == relay.from_ch || h == origin, |via| {
            ChraMsg::Sam(SamRelay {
                sam: relay.sam.clone(),
                ch_hops: relay.ch_hops + 1,
                via,
                from_ch: ch,
            })
        });
    }

    /// Called after every clustering maintenance round.
    pub fn on_cluster_round(&mut self, ctx: &mut Ctx, changed: &[NodeId], lost: &[(NodeId, NodeId)]) {
        for &(v, w) in lost {
            let r = &mut self.nodes[v.idx()];
            r.dv.retain(|_, n| *n != w);
            r.src_dv.retain(|_, n| *n != w);
        }
        for &v in changed {
            if !ctx.clustering.is_ch(v) {
                self.heads.remove(&v);
            }
            if !ctx.clustering.role(v).is_backbone() {
                // upstream pointers stay so breaks can still be reported back
                self.nodes[v.idx()].dv.clear();
            }
        }
        if self.plane_separation {
            for ch in ctx.clustering.assignment().cluster_heads() {
                if ctx.channel.is_alive(ch) {
                    self.refresh_local(ctx, ch);
                }
            }
        }
    }
}

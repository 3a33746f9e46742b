//! One simulation run: the event loop wiring mobility, the channel,
//! clustering, traffic and a routing protocol together.

use rand::Rng;

use crate::baselines::aodv::Aodv;
use crate::baselines::backbone_routing;
use crate::chra::Chra;
use crate::clustering::{ClusterParams, Clustering, KeepAlive, RoleChange};
use crate::config::{Protocol, ScenarioConfig};
use crate::engine::EventQueue;
use crate::metrics::{compute_metrics, PacketKind, RunMetrics, Stats, TxRecord};
use crate::mobility::{assign_mobile_subset, place_nodes, Mobility, MobilityParams};
use crate::network::{accrue_energy, airtime, Channel, LinkParams, NodeId, NodeState, Point, RadioState};
use crate::packet::{DataPacket, DataRoute, Packet};
use crate::rng::{mix64, RngStream};
use crate::routing::{Ctx, RoutingParams, SimEvent};
use crate::traffic::{generate_flows, Flow};

/// Nominal battery used to turn consumed energy into a residual-energy weight.
const NOMINAL_BATTERY_J: f64 = 100.0;

/// Everything needed to reproduce one run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub positions: Vec<Point>,
    pub mobile: Vec<NodeId>,
    pub mobility: MobilityParams,
    pub tx_range: f64,
    pub flows: Vec<Flow>,
    /// Nodes taken off the air at the given instants.
    pub failures: Vec<(f64, NodeId)>,
    pub duration: f64,
    pub protocol: Protocol,
    pub routing: RoutingParams,
    pub link: LinkParams,
    pub cluster: ClusterParams,
    pub mobility_tick: f64,
    pub seed: u64,
    pub trace: bool,
}

impl Scenario {
    /// Random scenario drawn from `cfg` for one run seed. Placement, the mobile
    /// subset, waypoints and traffic come from separate streams, so they are
    /// identical for every protocol.
    pub fn from_config(cfg: &ScenarioConfig, protocol: Protocol, seed: u64) -> Self {
        let n = cfg.node_count();
        let positions = place_nodes(n, cfg.area_side, &mut RngStream::new(seed, "placement"));
        let mobile = if cfg.speed_max > 0.0 {
            assign_mobile_subset(n, cfg.mobile_ratio, &mut RngStream::new(seed, "mobile-subset"))
        } else {
            Vec::new()
        };
        let flows = generate_flows(
            n,
            cfg.flows,
            cfg.period,
            cfg.payload,
            cfg.traffic_start,
            &mut RngStream::new(seed, "traffic"),
        );
        Self {
            positions,
            mobile,
            mobility: cfg.mobility_params(),
            tx_range: cfg.tx_range,
            flows,
            failures: Vec::new(),
            duration: cfg.duration,
            protocol,
            routing: cfg.routing_params(),
            link: cfg.link_params(),
            cluster: cfg.cluster_params(),
            mobility_tick: cfg.mobility_tick,
            seed,
            trace: false,
        }
    }

    /// Static hand-placed topology with no traffic; add flows and failures with
    /// the builder methods.
    pub fn fixed(positions: Vec<Point>, tx_range: f64, protocol: Protocol) -> Self {
        let cfg = ScenarioConfig::default();
        Self {
            positions,
            mobile: Vec::new(),
            mobility: MobilityParams {
                area_side: cfg.area_side,
                speed_min_kmh: 0.0,
                speed_max_kmh: 0.0,
                pause: 0.0,
            },
            tx_range,
            flows: Vec::new(),
            failures: Vec::new(),
            duration: cfg.duration,
            protocol,
            routing: cfg.routing_params(),
            link: cfg.link_params(),
            cluster: cfg.cluster_params(),
            mobility_tick: cfg.mobility_tick,
            seed: 0,
            trace: false,
        }
    }

    pub fn with_flow(mut self, src: u32, dst: u32, start: f64, period: f64) -> Self {
        self.flows.push(Flow {
            id: self.flows.len() as u32,
            src: NodeId(src),
            dst: NodeId(dst),
            period,
            payload: 512,
            offset: start,
        });
        self
    }

    pub fn with_failure(mut self, at: f64, node: u32) -> Self {
        self.failures.push((at, NodeId(node)));
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = true;
        self
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }
}

#[derive(Debug, Clone)]
pub enum Router {
    Chra(Chra),
    Aodv(Aodv),
}

impl Router {
    pub fn chra(&self) -> Option<&Chra> {
        match self {
            Router::Chra(c) => Some(c),
            Router::Aodv(_) => None,
        }
    }

    pub fn aodv(&self) -> Option<&Aodv> {
        match self {
            Router::Aodv(a) => Some(a),
            Router::Chra(_) => None,
        }
    }
}

/// Results of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub stats: Stats,
    pub energy: Vec<f64>,
    pub roles: Vec<RoleChange>,
    /// (time, flow) of every application send.
    pub app: Vec<(f64, u32)>,
    /// Running hash over every node position at every mobility tick.
    pub mobility_digest: u64,
}

pub struct Simulation {
    scn: Scenario,
    queue: EventQueue<SimEvent>,
    mobility: Mobility,
    channel: Channel,
    clustering: Clustering,
    router: Router,
    stats: Stats,
    flow_sent: Vec<u64>,
    keepalive_phase: Vec<f64>,
    keepalive_count: Vec<u64>,
    /// Energy spent on clustering traffic alone; drives election weights so
    /// that clustering is identical under every protocol.
    cluster_energy: Vec<f64>,
    ticks: u64,
    cluster_rounds: u64,
    sam_rounds: u64,
    app: Vec<(f64, u32)>,
    mobility_digest: u64,
}

impl Simulation {
    pub fn new(scn: Scenario) -> Self {
        let n = scn.positions.len();
        let mobility = if scn.mobile.is_empty() {
            Mobility::fixed(&scn.positions)
        } else {
            Mobility::new(
                scn.mobility,
                &scn.positions,
                &scn.mobile,
                RngStream::new(scn.seed, "waypoints"),
            )
        };
        let nodes: Vec<NodeState> = scn
            .positions
            .iter()
            .enumerate()
            .map(|(i, &p)| NodeState::new(NodeId::from(i), p, scn.tx_range))
            .collect();
        let mut channel = Channel::new(scn.link, nodes);
        let clustering = Clustering::bootstrap(scn.cluster, channel.snapshot(), 0.0);
        for i in 0..n {
            let v = NodeId::from(i);
            channel.set_role(v, clustering.role(v));
        }
        let router = match scn.protocol {
            Protocol::Chra => Router::Chra(Chra::new(n, true)),
            Protocol::Backbone => Router::Chra(backbone_routing(n)),
            Protocol::Aodv => Router::Aodv(Aodv::new(n)),
        };
        let mut phase_rng = RngStream::new(scn.seed, "keepalive-phase");
        let period = scn.cluster.keepalive_period;
        let keepalive_phase: Vec<f64> = (0..n)
            .map(|_| (phase_rng.random_range(0.0..period) * 100.0).floor() / 100.0)
            .collect();

        let mut queue = EventQueue::new();
        let sched = |q: &mut EventQueue<SimEvent>, t: f64, e: SimEvent| {
            q.schedule(t, e).expect("initial events are in the future");
        };
        if !scn.mobile.is_empty() {
            sched(&mut queue, scn.mobility_tick, SimEvent::MobilityTick);
        }
        for (i, &ph) in keepalive_phase.iter().enumerate() {
            sched(&mut queue, ph, SimEvent::KeepAlive(NodeId::from(i)));
        }
        sched(&mut queue, period, SimEvent::ClusterRound);
        if scn.protocol == Protocol::Chra {
            sched(&mut queue, 0.0, SimEvent::SamRound);
        }
        for f in &scn.flows {
            if f.offset < scn.duration {
                sched(&mut queue, f.offset, SimEvent::AppSend { flow: f.id });
            }
        }
        for &(t, v) in &scn.failures {
            sched(&mut queue, t, SimEvent::NodeFail(v));
        }

        let stats = Stats::with_trace(scn.trace);
        let flows = scn.flows.len();
        Self {
            scn,
            queue,
            mobility,
            channel,
            clustering,
            router,
            stats,
            flow_sent: vec![0; flows],
            keepalive_phase,
            keepalive_count: vec![0; n],
            cluster_energy: vec![0.0; n],
            ticks: 0,
            cluster_rounds: 0,
            sam_rounds: 0,
            app: Vec::new(),
            mobility_digest: 0,
        }
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn events_processed(&self) -> u64 {
        self.queue.processed()
    }

    /// Processes every event up to `t` (capped at the scenario duration).
    pub fn run_until(&mut self, t: f64) {
        let t = t.min(self.scn.duration);
        while let Some(ev) = self.queue.pop_until(t) {
            self.handle(ev.payload);
        }
        self.queue.advance_to(t);
    }

    pub fn finish(mut self) -> RunOutput {
        self.run_until(self.scn.duration);
        let energy = self.channel.finalize_energy(self.scn.duration);
        let metrics = compute_metrics(&self.stats, &energy);
        RunOutput {
            metrics,
            stats: self.stats,
            energy,
            roles: self.clustering.trace().to_vec(),
            app: self.app,
            mobility_digest: self.mobility_digest,
        }
    }

    fn schedule(&mut self, t: f64, ev: SimEvent) {
        if t < self.scn.duration {
            self.queue.schedule(t, ev).expect("periodic events move forward");
        }
    }

    fn with_ctx<R>(&mut self, f: impl FnOnce(&mut Router, &mut Ctx) -> R) -> R {
        let mut ctx = Ctx {
            now: self.queue.now(),
            channel: &mut self.channel,
            clustering: &self.clustering,
            queue: &mut self.queue,
            stats: &mut self.stats,
            params: &self.scn.routing,
        };
        f(&mut self.router, &mut ctx)
    }

    fn handle(&mut self, ev: SimEvent) {
        let now = self.queue.now();
        match ev {
            SimEvent::MobilityTick => {
                self.ticks += 1;
                self.mobility.advance_to(now);
                let positions = self.mobility.positions();
                for p in &positions {
                    self.mobility_digest = mix64(self.mobility_digest ^ p.x.to_bits());
                    self.mobility_digest = mix64(self.mobility_digest ^ p.y.to_bits());
                }
                self.channel.update_positions(&positions);
                self.schedule((self.ticks + 1) as f64 * self.scn.mobility_tick, SimEvent::MobilityTick);
            }
            SimEvent::KeepAlive(v) => {
                if self.channel.is_alive(v) {
                    self.send_keepalive(v, now);
                }
                let k = &mut self.keepalive_count[v.idx()];
                *k += 1;
                let next = self.keepalive_phase[v.idx()] + *k as f64 * self.scn.cluster.keepalive_period;
                self.schedule(next, SimEvent::KeepAlive(v));
            }
            SimEvent::ClusterRound => {
                self.cluster_round(now);
                self.cluster_rounds += 1;
                let next = (self.cluster_rounds + 1) as f64 * self.scn.cluster.keepalive_period;
                self.schedule(next, SimEvent::ClusterRound);
            }
            SimEvent::SamRound => {
                self.with_ctx(|r, ctx| {
                    if let Router::Chra(c) = r {
                        c.on_sam_round(ctx);
                    }
                });
                self.sam_rounds += 1;
                let next = self.sam_rounds as f64 * self.scn.routing.t_sam;
                self.schedule(next, SimEvent::SamRound);
            }
            SimEvent::AppSend { flow } => self.app_send(flow, now),
            SimEvent::Deliver { to, from, packet } => {
                if !self.channel.is_alive(to) {
                    if let Packet::Data(d) = &packet {
                        self.stats.dropped(d.id);
                    }
                    return;
                }
                self.with_ctx(|r, ctx| match (r, packet) {
                    (Router::Chra(c), Packet::Data(d)) => c.on_data(ctx, to, d),
                    (Router::Aodv(a), Packet::Data(d)) => a.on_data(ctx, to, d),
                    (Router::Chra(c), Packet::Chra(m)) => c.on_packet(ctx, to, from, m),
                    (Router::Aodv(a), Packet::Aodv(m)) => a.on_packet(ctx, to, from, m),
                    _ => {}
                });
            }
            SimEvent::Timer { node, timer } => {
                if self.channel.is_alive(node) {
                    self.with_ctx(|r, ctx| match r {
                        Router::Chra(c) => c.on_timer(ctx, node, timer),
                        Router::Aodv(a) => a.on_timer(ctx, node, timer),
                    });
                }
            }
            SimEvent::NodeFail(v) => {
                self.channel.fail_node(v);
                self.clustering.remove_node(v);
            }
        }
    }

    fn send_keepalive(&mut self, v: NodeId, now: f64) {
        let ka: KeepAlive = self.clustering.keepalive(v, now);
        let bytes = ka.size_bytes();
        let receivers = self.channel.broadcast(v, bytes);
        let rec = TxRecord {
            time: now,
            kind: PacketKind::KeepAlive,
            from: v,
            to: None,
            size: bytes,
            from_role: self.clustering.role(v),
            to_role: None,
            packet: None,
        };
        self.stats.record_tx(rec, receivers.len());
        let air = airtime(bytes, self.scn.link.rate_bps, self.scn.link.min_airtime);
        let power = self.scn.link.power;
        self.cluster_energy[v.idx()] += power.power(RadioState::Tx) * air;
        for &w in &receivers {
            self.cluster_energy[w.idx()] += power.power(RadioState::Rx) * air;
            self.clustering.on_keepalive(w, ka.clone(), now);
        }
    }

    fn cluster_round(&mut self, now: f64) {
        let n = self.clustering.len();
        let mut lost = Vec::new();
        for i in 0..n {
            let v = NodeId::from(i);
            for w in self.clustering.detect_neighbor_loss(v, now) {
                lost.push((v, w));
            }
        }
        let idle = self.scn.link.power.idle_w * now;
        let residual: Vec<f64> = self
            .cluster_energy
            .iter()
            .map(|e| NOMINAL_BATTERY_J - idle - e)
            .collect();
        let changed = self.clustering.maintain(now, &residual);
        for &v in &changed {
            self.channel.set_role(v, self.clustering.role(v));
        }
        self.with_ctx(|r, ctx| match r {
            Router::Chra(c) => c.on_cluster_round(ctx, &changed, &lost),
            Router::Aodv(a) => {
                for &(v, w) in &lost {
                    a.on_neighbor_lost(v, w);
                }
            }
        });
    }

    fn app_send(&mut self, flow: u32, now: f64) {
        let f = self.scn.flows[flow as usize].clone();
        let k = &mut self.flow_sent[flow as usize];
        *k += 1;
        let next = f.send_time(*k);
        if next < self.scn.duration {
            self.queue
                .schedule(next, SimEvent::AppSend { flow })
                .expect("next send is in the future");
        }
        self.app.push((now, flow));
        let id = self.stats.app_sent(flow, now);
        let pkt = DataPacket {
            id,
            flow,
            src: f.src,
            dst: f.dst,
            created: now,
            hops: 0,
            payload: f.payload,
            route: DataRoute::HopByHop,
        };
        if !self.channel.is_alive(f.src) {
            self.stats.dropped(id);
            return;
        }
        self.with_ctx(|r, ctx| match r {
            Router::Chra(c) => c.on_app_send(ctx, pkt),
            Router::Aodv(a) => a.on_app_send(ctx, pkt),
        });
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(scn: Scenario) -> RunOutput {
    Simulation::new(scn).finish()
}

/// Idle-only energy of a node over `duration`, for closed-form checks.
pub fn idle_energy(link: &LinkParams, duration: f64) -> f64 {
    let mut n = NodeState::new(NodeId(0), Point::new(0.0, 0.0), 1.0);
    accrue_energy(&mut n, &link.power, RadioState::Idle, duration)
}

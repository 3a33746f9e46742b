//! Geometry, connectivity and the ideal link layer with radio-state energy accounting.

use std::fmt;

/// Node identifier. Ids are dense, `0..node_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    ClusterHead,
    Gateway,
    Ordinary,
}

impl Role {
    pub fn is_backbone(self) -> bool {
        matches!(self, Role::ClusterHead | Role::Gateway)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioState {
    Tx,
    Rx,
    Idle,
}

/// Radio power draw per state, watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProfile {
    pub tx_w: f64,
    pub rx_w: f64,
    pub idle_w: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            tx_w: 0.25,
            rx_w: 0.10,
            idle_w: 0.01,
        }
    }
}

impl PowerProfile {
    pub fn power(&self, state: RadioState) -> f64 {
        match state {
            RadioState::Tx => self.tx_w,
            RadioState::Rx => self.rx_w,
            RadioState::Idle => self.idle_w,
        }
    }
}

/// Per-node state as seen by the physical layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub position: Point,
    pub tx_range: f64,
    pub role: Role,
    pub energy_consumed: f64,
    pub radio_state: RadioState,
    tx_time: f64,
    rx_time: f64,
}

impl NodeState {
    pub fn new(id: NodeId, position: Point, tx_range: f64) -> Self {
        Self {
            id,
            position,
            tx_range,
            role: Role::Ordinary,
            energy_consumed: 0.0,
            radio_state: RadioState::Idle,
            tx_time: 0.0,
            rx_time: 0.0,
        }
    }

    pub fn tx_time(&self) -> f64 {
        self.tx_time
    }

    pub fn rx_time(&self) -> f64 {
        self.rx_time
    }
}

/// True iff the two nodes are within each other's effective range.
pub fn in_range(a: &NodeState, b: &NodeState) -> bool {
    debug_assert_ne!(a.id, b.id);
    a.position.dist(b.position) <= a.tx_range.min(b.tx_range)
}

/// Adds `power(state) * duration` to the node and returns the joules added.
pub fn accrue_energy(node: &mut NodeState, power: &PowerProfile, state: RadioState, duration: f64) -> f64 {
    debug_assert!(duration >= 0.0);
    let joules = power.power(state) * duration;
    node.energy_consumed += joules;
    match state {
        RadioState::Tx => node.tx_time += duration,
        RadioState::Rx => node.rx_time += duration,
        RadioState::Idle => {}
    }
    joules
}

/// Airtime of a frame: `bytes * 8 / rate`, floored at `min_airtime`.
pub fn airtime(bytes: u32, rate_bps: f64, min_airtime: f64) -> f64 {
    (f64::from(bytes) * 8.0 / rate_bps).max(min_airtime)
}

/// Symmetric connectivity at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSnapshot {
    n: usize,
    matrix: Vec<bool>,
    neighbors: Vec<Vec<NodeId>>,
}

impl LinkSnapshot {
    /// Builds the range-disc graph. Nodes with `alive[i] == false` have no links.
    pub fn from_nodes(nodes: &[NodeState], alive: &[bool]) -> Self {
        let n = nodes.len();
        let mut matrix = vec![false; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && in_range(&nodes[i], &nodes[j]) {
                    matrix[i * n + j] = true;
                    matrix[j * n + i] = true;
                    neighbors[i].push(NodeId::from(j));
                    neighbors[j].push(NodeId::from(i));
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            n,
            matrix,
            neighbors,
        }
    }

    /// Builds a snapshot from an explicit edge list.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut matrix = vec![false; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            if a == b || matrix[a * n + b] {
                continue;
            }
            matrix[a * n + b] = true;
            matrix[b * n + a] = true;
            neighbors[a].push(NodeId::from(b));
            neighbors[b].push(NodeId::from(a));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            n,
            matrix,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.matrix[a.idx() * self.n + b.idx()]
    }

    pub fn neighbors(&self, a: NodeId) -> &[NodeId] {
        &self.neighbors[a.idx()]
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, ns)| {
            ns.iter()
                .filter(move |j| j.idx() > i)
                .map(move |&j| (NodeId::from(i), j))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Physical-layer parameters shared by every transmission in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub hop_latency: f64,
    pub rate_bps: f64,
    pub min_airtime: f64,
    pub power: PowerProfile,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            hop_latency: 0.002,
            rate_bps: 54e6,
            min_airtime: 1e-4,
            power: PowerProfile::default(),
        }
    }
}

/// Ideal shared medium: no loss, no collisions, fixed per-hop latency.
///
/// The channel only decides *who* receives and charges radio energy; the
/// caller schedules the resulting delivery events.
#[derive(Debug, Clone)]
pub struct Channel {
    pub params: LinkParams,
    nodes: Vec<NodeState>,
    alive: Vec<bool>,
    snapshot: LinkSnapshot,
}

impl Channel {
    pub fn new(params: LinkParams, nodes: Vec<NodeState>) -> Self {
        let alive = vec![true; nodes.len()];
        let snapshot = LinkSnapshot::from_nodes(&nodes, &alive);
        Self {
            params,
            nodes,
            alive,
            snapshot,
        }
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.idx()]
    }

    pub fn snapshot(&self) -> &LinkSnapshot {
        &self.snapshot
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id.idx()]
    }

    pub fn set_role(&mut self, id: NodeId, role: Role) {
        self.nodes[id.idx()].role = role;
    }

    /// Updates positions and recomputes connectivity.
    pub fn update_positions(&mut self, positions: &[Point]) {
        for (node, p) in self.nodes.iter_mut().zip(positions) {
            node.position = *p;
        }
        self.snapshot = LinkSnapshot::from_nodes(&self.nodes, &self.alive);
    }

    /// Takes a node off the air permanently.
    pub fn fail_node(&mut self, id: NodeId) {
        self.alive[id.idx()] = false;
        self.snapshot = LinkSnapshot::from_nodes(&self.nodes, &self.alive);
    }

    fn charge(&mut self, id: NodeId, state: RadioState, bytes: u32) {
        let air = airtime(bytes, self.params.rate_bps, self.params.min_airtime);
        let power = self.params.power;
        let node = &mut self.nodes[id.idx()];
        node.radio_state = state;
        accrue_energy(node, &power, state, air);
        node.radio_state = RadioState::Idle;
    }

    /// Unicast. Returns `false` (and charges nothing) when `to` is not a current
    /// neighbour of `from`; the caller treats that as a link-break indication.
    pub fn unicast(&mut self, from: NodeId, to: NodeId, bytes: u32) -> bool {
        if !self.alive[from.idx()] || !self.snapshot.linked(from, to) {
            return false;
        }
        self.charge(from, RadioState::Tx, bytes);
        self.charge(to, RadioState::Rx, bytes);
        true
    }

    /// Broadcast to every current neighbour; returns the receivers.
    pub fn broadcast(&mut self, from: NodeId, bytes: u32) -> Vec<NodeId> {
        if !self.alive[from.idx()] {
            return Vec::new();
        }
        let receivers = self.snapshot.neighbors(from).to_vec();
        self.charge(from, RadioState::Tx, bytes);
        for &r in &receivers {
            self.charge(r, RadioState::Rx, bytes);
        }
        receivers
    }

    /// Charges idle power for the part of `[0, duration]` each node spent neither
    /// transmitting nor receiving, and returns per-node totals.
    pub fn finalize_energy(&mut self, duration: f64) -> Vec<f64> {
        let power = self.params.power;
        self.nodes
            .iter_mut()
            .map(|node| {
                let idle = (duration - node.tx_time - node.rx_time).max(0.0);
                accrue_energy(node, &power, RadioState::Idle, idle);
                node.energy_consumed
            })
            .collect()
    }
}

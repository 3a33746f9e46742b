//! One-hop clustering shared by every routing protocol.
//!
//! Election is greedy highest-weight-first over a weighted combination of node
//! degree, residual energy and the number of distinct neighbouring clusters.
//! Nodes keep their view of the neighbourhood fresh with periodic keep-alives;
//! a neighbour silent for longer than `loss_timeout` is declared lost.

use std::collections::{BTreeMap, BTreeSet};

use crate::network::{LinkSnapshot, NodeId, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub keepalive_period: f64,
    pub loss_timeout: f64,
    /// Coefficients for degree, residual energy, connectivity.
    pub weights: [f64; 3],
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            keepalive_period: 1.0,
            loss_timeout: 2.5,
            weights: [1.0 / 3.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeWeight {
    pub degree: usize,
    pub residual_energy: f64,
    pub connectivity: usize,
}

/// Min-max normalises each factor over the population and combines them.
pub fn combine_weights(factors: &[NodeWeight], coeffs: [f64; 3]) -> Vec<f64> {
    fn norm(values: &[f64]) -> Vec<f64> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi.is_nan() || hi <= lo {
            return vec![0.0; values.len()];
        }
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }
    let deg = norm(&factors.iter().map(|f| f.degree as f64).collect::<Vec<_>>());
    let en = norm(&factors.iter().map(|f| f.residual_energy).collect::<Vec<_>>());
    let con = norm(&factors.iter().map(|f| f.connectivity as f64).collect::<Vec<_>>());
    (0..factors.len())
        .map(|i| coeffs[0] * deg[i] + coeffs[1] * en[i] + coeffs[2] * con[i])
        .collect()
}

fn by_weight_then_id(weight: &[f64]) -> impl Fn(&NodeId, &NodeId) -> std::cmp::Ordering + '_ {
    move |a, b| weight[b.idx()].total_cmp(&weight[a.idx()]).then(a.cmp(b))
}

/// Greedy election restricted to `candidates`.
///
/// Repeatedly the uncovered candidate with the largest weight (lowest id on
/// ties) becomes a cluster head and absorbs its uncovered candidate neighbours.
/// Returns `node -> cluster head` for every candidate.
pub fn elect_among<F>(candidates: &[NodeId], mut neighbors: F, weight: &[f64]) -> BTreeMap<NodeId, NodeId>
where
    F: FnMut(NodeId) -> Vec<NodeId>,
{
    let pool: BTreeSet<NodeId> = candidates.iter().copied().collect();
    let mut order: Vec<NodeId> = pool.iter().copied().collect();
    order.sort_by(by_weight_then_id(weight));
    let mut assignment = BTreeMap::new();
    for head in order {
        if assignment.contains_key(&head) {
            continue;
        }
        assignment.insert(head, head);
        for nb in neighbors(head) {
            if pool.contains(&nb) {
                assignment.entry(nb).or_insert(head);
            }
        }
    }
    assignment
}

/// Cluster membership and roles for the whole population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleAssignment {
    pub ch_of: Vec<NodeId>,
    pub role: Vec<Role>,
}

impl RoleAssignment {
    pub fn cluster_heads(&self) -> Vec<NodeId> {
        (0..self.ch_of.len())
            .map(NodeId::from)
            .filter(|&v| self.ch_of[v.idx()] == v)
            .collect()
    }

    pub fn members(&self, ch: NodeId) -> Vec<NodeId> {
        (0..self.ch_of.len())
            .map(NodeId::from)
            .filter(|&v| self.ch_of[v.idx()] == ch)
            .collect()
    }
}

/// Global greedy election on a snapshot. Gateways are not classified here.
pub fn elect_cluster_heads(snapshot: &LinkSnapshot, weight: &[f64]) -> RoleAssignment {
    let all: Vec<NodeId> = (0..snapshot.len()).map(NodeId::from).collect();
    let map = elect_among(&all, |v| snapshot.neighbors(v).to_vec(), weight);
    let ch_of: Vec<NodeId> = all.iter().map(|v| map[v]).collect();
    let role = all
        .iter()
        .map(|&v| if ch_of[v.idx()] == v { Role::ClusterHead } else { Role::Ordinary })
        .collect();
    RoleAssignment { ch_of, role }
}

/// An ordinary node is a gateway iff it has a neighbour in a different cluster.
pub fn classify_gateways<F>(ch_of: &[NodeId], mut neighbors: F) -> BTreeSet<NodeId>
where
    F: FnMut(NodeId) -> Vec<NodeId>,
{
    (0..ch_of.len())
        .map(NodeId::from)
        .filter(|&v| ch_of[v.idx()] != v)
        .filter(|&v| neighbors(v).iter().any(|w| ch_of[w.idx()] != ch_of[v.idx()]))
        .collect()
}

/// Applies [`classify_gateways`] to an assignment in place.
pub fn assign_gateways(roles: &mut RoleAssignment, snapshot: &LinkSnapshot) {
    let gws = classify_gateways(&roles.ch_of, |v| snapshot.neighbors(v).to_vec());
    for (i, r) in roles.role.iter_mut().enumerate() {
        let v = NodeId::from(i);
        *r = if roles.ch_of[i] == v {
            Role::ClusterHead
        } else if gws.contains(&v) {
            Role::Gateway
        } else {
            Role::Ordinary
        };
    }
}

/// Content of a keep-alive beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct KeepAlive {
    pub from: NodeId,
    pub ch: NodeId,
    pub role: Role,
    /// Heard neighbours together with the cluster each one last announced.
    pub neighbors: Vec<(NodeId, NodeId)>,
}

impl KeepAlive {
    pub fn size_bytes(&self) -> u32 {
        16 + 4 * self.neighbors.len() as u32
    }
}

/// What one node knows about its neighbourhood.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    pub last_heard: BTreeMap<NodeId, f64>,
    pub reports: BTreeMap<NodeId, KeepAlive>,
}

/// A cluster as seen from the assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub ch_id: NodeId,
    pub members: BTreeSet<NodeId>,
    pub keepalive_period: f64,
}

/// One change of role or affiliation, for trace comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleChange {
    pub time: f64,
    pub node: NodeId,
    pub role: Role,
    pub ch: NodeId,
}

/// Runtime clustering state for a whole run.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub params: ClusterParams,
    assignment: RoleAssignment,
    tables: Vec<NeighborTable>,
    trace: Vec<RoleChange>,
    dead: BTreeSet<NodeId>,
}

impl Clustering {
    /// Forms the initial clusters from the ground-truth snapshot, as if the
    /// clustering layer had already converged before the run starts.
    pub fn bootstrap(params: ClusterParams, snapshot: &LinkSnapshot, t: f64) -> Self {
        let n = snapshot.len();
        let factors: Vec<NodeWeight> = (0..n)
            .map(|i| NodeWeight {
                degree: snapshot.neighbors(NodeId::from(i)).len(),
                residual_energy: 0.0,
                connectivity: 0,
            })
            .collect();
        let weight = combine_weights(&factors, params.weights);
        let mut assignment = elect_cluster_heads(snapshot, &weight);
        assign_gateways(&mut assignment, snapshot);
        let mut tables = vec![NeighborTable::default(); n];
        for (i, table) in tables.iter_mut().enumerate() {
            for &w in snapshot.neighbors(NodeId::from(i)) {
                table.last_heard.insert(w, t);
            }
        }
        let mut c = Self {
            params,
            assignment,
            tables,
            trace: Vec::new(),
            dead: BTreeSet::new(),
        };
        for i in 0..n {
            let v = NodeId::from(i);
            let ka = KeepAlive {
                from: v,
                ch: c.ch_of(v),
                role: c.role(v),
                neighbors: snapshot.neighbors(v).iter().map(|&w| (w, c.ch_of(w))).collect(),
            };
            for &w in snapshot.neighbors(v) {
                c.tables[w.idx()].reports.insert(v, ka.clone());
            }
        }
        for i in 0..n {
            let v = NodeId::from(i);
            c.trace.push(RoleChange {
                time: t,
                node: v,
                role: c.assignment.role[i],
                ch: c.assignment.ch_of[i],
            });
        }
        c
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn assignment(&self) -> &RoleAssignment {
        &self.assignment
    }

    pub fn ch_of(&self, v: NodeId) -> NodeId {
        self.assignment.ch_of[v.idx()]
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.assignment.role[v.idx()]
    }

    pub fn is_ch(&self, v: NodeId) -> bool {
        self.ch_of(v) == v
    }

    pub fn table(&self, v: NodeId) -> &NeighborTable {
        &self.tables[v.idx()]
    }

    pub fn trace(&self) -> &[RoleChange] {
        &self.trace
    }

    pub fn cluster(&self, ch: NodeId) -> ClusterState {
        ClusterState {
            ch_id: ch,
            members: self.assignment.members(ch).into_iter().collect(),
            keepalive_period: self.params.keepalive_period,
        }
    }

    /// Neighbours heard within the loss timeout.
    pub fn heard(&self, v: NodeId, t: f64) -> Vec<NodeId> {
        self.tables[v.idx()]
            .last_heard
            .iter()
            .filter(|(_, &at)| t - at <= self.params.loss_timeout)
            .map(|(&w, _)| w)
            .collect()
    }

    /// Fresh keep-alive report of `w` as held by `v`.
    pub fn report(&self, v: NodeId, w: NodeId, t: f64) -> Option<&KeepAlive> {
        let table = &self.tables[v.idx()];
        let at = table.last_heard.get(&w)?;
        if t - at > self.params.loss_timeout {
            return None;
        }
        table.reports.get(&w)
    }

    /// Beacon content for node `v` at time `t`.
    pub fn keepalive(&self, v: NodeId, t: f64) -> KeepAlive {
        let neighbors = self
            .heard(v, t)
            .into_iter()
            .map(|w| {
                let ch = self.tables[v.idx()].reports.get(&w).map_or(w, |r| r.ch);
                (w, ch)
            })
            .collect();
        KeepAlive {
            from: v,
            ch: self.ch_of(v),
            role: self.role(v),
            neighbors,
        }
    }

    /// Receiver side of a keep-alive.
    pub fn on_keepalive(&mut self, at: NodeId, ka: KeepAlive, t: f64) {
        let table = &mut self.tables[at.idx()];
        table.last_heard.insert(ka.from, t);
        table.reports.insert(ka.from, ka);
    }

    /// Takes `v` out of clustering for good: it keeps its last role and is
    /// ignored by maintenance.
    pub fn remove_node(&mut self, v: NodeId) {
        self.dead.insert(v);
    }

    /// Removes and returns neighbours silent for longer than the loss timeout.
    /// Each loss is reported once.
    pub fn detect_neighbor_loss(&mut self, v: NodeId, t: f64) -> Vec<NodeId> {
        let timeout = self.params.loss_timeout;
        let table = &mut self.tables[v.idx()];
        let lost: Vec<NodeId> = table
            .last_heard
            .iter()
            .filter(|(_, &at)| t - at > timeout)
            .map(|(&w, _)| w)
            .collect();
        for w in &lost {
            table.last_heard.remove(w);
            table.reports.remove(w);
        }
        lost
    }

    fn weights(&self, t: f64, residual_energy: &[f64]) -> Vec<f64> {
        let factors: Vec<NodeWeight> = (0..self.len())
            .map(|i| {
                let v = NodeId::from(i);
                let heard = self.heard(v, t);
                let clusters: BTreeSet<NodeId> = heard
                    .iter()
                    .map(|w| self.ch_of(*w))
                    .filter(|&c| c != self.ch_of(v))
                    .collect();
                NodeWeight {
                    degree: heard.len(),
                    residual_energy: residual_energy[i],
                    connectivity: clusters.len(),
                }
            })
            .collect();
        combine_weights(&factors, self.params.weights)
    }

    /// One maintenance round: orphaned members re-affiliate, adjacent cluster
    /// heads are resolved in favour of the heavier one, and gateways are
    /// reclassified. Returns the nodes whose role or cluster changed.
    pub fn maintain(&mut self, t: f64, residual_energy: &[f64]) -> Vec<NodeId> {
        let n = self.len();
        let weight = self.weights(t, residual_energy);
        let heard: Vec<BTreeSet<NodeId>> = (0..n)
            .map(|i| self.heard(NodeId::from(i), t).into_iter().collect())
            .collect();
        let before = self.assignment.clone();
        let mut ch_of = self.assignment.ch_of.clone();

        // Adjacent heads: the lighter one resigns.
        let order = by_weight_then_id(&weight);
        let mut heads: Vec<NodeId> = (0..n)
            .map(NodeId::from)
            .filter(|v| ch_of[v.idx()] == *v && !self.dead.contains(v))
            .collect();
        heads.sort_by(&order);
        let mut resigned = BTreeSet::new();
        for &h in &heads {
            let stronger = heard[h.idx()].iter().any(|&o| {
                ch_of[o.idx()] == o && !resigned.contains(&o) && order(&o, &h).is_lt()
            });
            if stronger {
                resigned.insert(h);
            }
        }

        let mut orphans: Vec<NodeId> = Vec::new();
        for i in 0..n {
            let v = NodeId::from(i);
            if self.dead.contains(&v) {
                continue;
            }
            let ch = ch_of[i];
            let lost_head = ch != v && !heard[i].contains(&ch);
            if resigned.contains(&ch) || lost_head {
                orphans.push(v);
            }
        }
        let orphan_set: BTreeSet<NodeId> = orphans.iter().copied().collect();
        for &o in &orphans {
            ch_of[o.idx()] = o;
        }

        // Orphans join the heaviest surviving head they can hear.
        let mut unplaced = Vec::new();
        for &o in &orphans {
            let best = heard[o.idx()]
                .iter()
                .copied()
                .filter(|&h| !orphan_set.contains(&h) && ch_of[h.idx()] == h)
                .min_by(|a, b| order(a, b));
            match best {
                Some(h) => ch_of[o.idx()] = h,
                None => unplaced.push(o),
            }
        }
        // The rest elect among themselves.
        let local = elect_among(&unplaced, |v| heard[v.idx()].iter().copied().collect(), &weight);
        for (v, h) in local {
            ch_of[v.idx()] = h;
        }

        let gws = classify_gateways(&ch_of, |v| heard[v.idx()].iter().copied().collect());
        let role: Vec<Role> = (0..n)
            .map(|i| {
                let v = NodeId::from(i);
                if self.dead.contains(&v) {
                    before.role[i]
                } else if ch_of[i] == v {
                    Role::ClusterHead
                } else if gws.contains(&v) {
                    Role::Gateway
                } else {
                    Role::Ordinary
                }
            })
            .collect();
        self.assignment = RoleAssignment { ch_of, role };

        let mut changed = Vec::new();
        for i in 0..n {
            if before.ch_of[i] != self.assignment.ch_of[i] || before.role[i] != self.assignment.role[i] {
                let v = NodeId::from(i);
                changed.push(v);
                self.trace.push(RoleChange {
                    time: t,
                    node: v,
                    role: self.assignment.role[i],
                    ch: self.assignment.ch_of[i],
                });
            }
        }
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn degree_weights(s: &LinkSnapshot) -> Vec<f64> {
        (0..s.len()).map(|i| s.neighbors(NodeId::from(i)).len() as f64).collect()
    }

    #[test]
    fn isolated_node_is_its_own_head() {
        let s = LinkSnapshot::from_edges(1, &[]);
        let r = elect_cluster_heads(&s, &[0.0]);
        assert_eq!(r.ch_of, ids(&[0]));
        assert_eq!(r.role, vec![Role::ClusterHead]);
    }

    #[test]
    fn star_center_becomes_head() {
        let s = LinkSnapshot::from_edges(5, &[(2, 0), (2, 1), (2, 3), (2, 4)]);
        let r = elect_cluster_heads(&s, &degree_weights(&s));
        assert_eq!(r.cluster_heads(), ids(&[2]));
        assert_eq!(r.members(NodeId(2)).len(), 5);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let s = LinkSnapshot::from_edges(2, &[(0, 1)]);
        let r = elect_cluster_heads(&s, &[1.0, 1.0]);
        assert_eq!(r.cluster_heads(), ids(&[0]));
    }

    #[test]
    fn weights_normalise_to_unit_range() {
        let f = [
            NodeWeight { degree: 0, residual_energy: 5.0, connectivity: 0 },
            NodeWeight { degree: 4, residual_energy: 5.0, connectivity: 2 },
        ];
        let w = combine_weights(&f, [1.0 / 3.0; 3]);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bridging_node_is_gateway() {
        // heads 0 and 4; 2 bridges 1 (cluster 0) and 3 (cluster 4)
        let ch_of = ids(&[0, 0, 0, 4, 4]);
        let s = LinkSnapshot::from_edges(5, &[(0, 1), (0, 2), (2, 3), (3, 4), (1, 2)]);
        let g = classify_gateways(&ch_of, |v| s.neighbors(v).to_vec());
        assert_eq!(g, ids(&[2, 3]).into_iter().collect());
    }

    #[test]
    fn isolated_cluster_has_no_gateways() {
        let s = LinkSnapshot::from_edges(3, &[(0, 1), (0, 2)]);
        let mut r = elect_cluster_heads(&s, &degree_weights(&s));
        assign_gateways(&mut r, &s);
        assert!(!r.role.contains(&Role::Gateway));
    }

    #[test]
    fn node_next_to_two_foreign_clusters_is_one_gateway() {
        let ch_of = ids(&[0, 1, 2, 0]);
        let s = LinkSnapshot::from_edges(4, &[(3, 0), (3, 1), (3, 2)]);
        let g = classify_gateways(&ch_of, |v| s.neighbors(v).to_vec());
        assert_eq!(g, ids(&[3]).into_iter().collect());
    }

    fn line(n: u32) -> LinkSnapshot {
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        LinkSnapshot::from_edges(n as usize, &edges)
    }

    #[test]
    fn keepalive_updates_last_heard_to_arrival_time() {
        let s = line(3);
        let mut c = Clustering::bootstrap(ClusterParams::default(), &s, 0.0);
        let ka = c.keepalive(NodeId(0), 0.7);
        c.on_keepalive(NodeId(1), ka, 0.702);
        assert_eq!(c.table(NodeId(1)).last_heard[&NodeId(0)], 0.702);
    }

    #[test]
    fn silent_neighbor_lost_exactly_once() {
        let s = line(3);
        let mut c = Clustering::bootstrap(ClusterParams::default(), &s, 0.0);
        assert!(c.detect_neighbor_loss(NodeId(1), 2.5).is_empty());
        assert_eq!(c.detect_neighbor_loss(NodeId(1), 2.6), ids(&[0, 2]));
        assert!(c.detect_neighbor_loss(NodeId(1), 5.0).is_empty());
    }

    #[test]
    fn neighbor_back_within_timeout_never_lost() {
        let s = line(2);
        let mut c = Clustering::bootstrap(ClusterParams::default(), &s, 0.0);
        // absent for 2 s, then heard again
        let ka = c.keepalive(NodeId(0), 2.0);
        c.on_keepalive(NodeId(1), ka, 2.0);
        for t in [1.0, 2.0, 3.0, 4.0] {
            assert!(c.detect_neighbor_loss(NodeId(1), t).is_empty());
        }
    }

    #[test]
    fn losing_the_head_triggers_local_reelection() {
        // star around 2, with 0-1 and 3-4 links among members
        let s = LinkSnapshot::from_edges(5, &[(2, 0), (2, 1), (2, 3), (2, 4), (0, 1), (3, 4)]);
        let mut c = Clustering::bootstrap(ClusterParams::default(), &s, 0.0);
        assert_eq!(c.assignment().cluster_heads(), ids(&[2]));
        // head 2 disappears: nobody hears it after the timeout
        let after = LinkSnapshot::from_edges(5, &[(0, 1), (3, 4)]);
        for v in 0..5u32 {
            if v != 2 {
                for &w in after.neighbors(NodeId(v)) {
                    let ka = c.keepalive(w, 3.0);
                    c.on_keepalive(NodeId(v), ka, 3.0);
                }
                c.detect_neighbor_loss(NodeId(v), 3.0);
            }
        }
        let energy = vec![0.0; 5];
        c.maintain(3.0, &energy);
        // oracle: greedy election on the post-loss graph among the orphans
        let orphans = ids(&[0, 1, 3, 4]);
        let weight = c.weights(3.0, &energy);
        let expect = elect_among(&orphans, |v| after.neighbors(v).to_vec(), &weight);
        for (v, h) in expect {
            assert_eq!(c.ch_of(v), h);
        }
    }

    #[test]
    fn adjacent_heads_resolved_in_one_round() {
        let s = LinkSnapshot::from_edges(4, &[(0, 1), (2, 3)]);
        let mut c = Clustering::bootstrap(ClusterParams::default(), &s, 0.0);
        assert_eq!(c.assignment().cluster_heads(), ids(&[0, 2]));
        // heads 0 and 2 come into range
        for (a, b) in [(0u32, 2u32), (2, 0)] {
            let ka = c.keepalive(NodeId(a), 1.0);
            c.on_keepalive(NodeId(b), ka, 1.0);
        }
        c.maintain(1.0, &[0.0; 4]);
        let heads = c.assignment().cluster_heads();
        assert!(heads.contains(&NodeId(0)) && !heads.contains(&NodeId(2)));
        assert_eq!(c.ch_of(NodeId(2)), NodeId(0));
        assert!(c.trace().len() > 4);
    }
}

//! Minimum-hop path search over a visibility matrix.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::csa::VisibilityMatrix;
use crate::network::NodeId;

pub type Adjacency = BTreeMap<NodeId, BTreeSet<NodeId>>;

/// Minimum-hop path from `src` to `dst` avoiding `blocked`, ties broken by the
/// lexicographically smallest node sequence. Unit link weights make Dijkstra
/// a breadth-first search.
pub fn shortest_path(adj: &Adjacency, src: NodeId, dst: NodeId, blocked: &BTreeSet<NodeId>) -> Option<Vec<NodeId>> {
    if src == dst {
        return Some(vec![src]);
    }
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::from([(dst, 0)]);
    let mut queue = VecDeque::from([dst]);
    'bfs: while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for &w in adj.get(&v).into_iter().flatten() {
            if dist.contains_key(&w) || (blocked.contains(&w) && w != src) {
                continue;
            }
            dist.insert(w, d + 1);
            if w == src {
                break 'bfs;
            }
            queue.push_back(w);
        }
    }
    let mut left = *dist.get(&src)?;
    let mut path = vec![src];
    let mut cur = src;
    while left > 0 {
        let next = adj[&cur]
            .iter()
            .copied()
            .find(|w| dist.get(w) == Some(&(left - 1)))?;
        path.push(next);
        cur = next;
        left -= 1;
    }
    Some(path)
}

/// Shortest end-to-end path in a head's sight area, or `None` if either end is
/// unknown, they are disconnected, or the path is longer than `cap` hops.
pub fn shortest_eep(vm: &VisibilityMatrix, src: NodeId, dst: NodeId, cap: usize) -> Option<Vec<NodeId>> {
    if !vm.knows(src) || !vm.knows(dst) {
        return None;
    }
    shortest_path(&vm.adjacency(), src, dst, &BTreeSet::new()).filter(|p| p.len() - 1 <= cap)
}

//! Label-setting shortest paths with deterministic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::network::Network;

pub const NO_EDGE: usize = usize::MAX;

#[derive(Copy, Clone, PartialEq)]
struct State {
    dist: f64,
    vertex: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from one origin.
#[derive(Debug, Clone)]
pub struct PathTree {
    pub origin: usize,
    pub dist: Vec<f64>,
    pub pred_edge: Vec<usize>,
}

impl PathTree {
    pub fn reaches(&self, v: usize) -> bool {
        self.dist[v].is_finite()
    }

    /// Edge sequence origin → `target`, or `None` if unreachable.
    pub fn path_to(&self, net: &Network, target: usize) -> Option<Vec<usize>> {
        if !self.reaches(target) {
            return None;
        }
        let mut edges = Vec::new();
        let mut v = target;
        while v != self.origin {
            let e = self.pred_edge[v];
            edges.push(e);
            v = net.edge(e).tail;
        }
        edges.reverse();
        Some(edges)
    }
}

/// Dijkstra over nonnegative `weights`. Among equal-distance labels the
/// predecessor edge with the lowest index wins.
pub fn shortest_path_tree(net: &Network, origin: usize, weights: &[f64]) -> PathTree {
    let n = net.num_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred_edge = vec![NO_EDGE; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(State { dist: 0.0, vertex: origin });
    while let Some(State { dist: d, vertex: u }) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        for &e in net.out_edges(u) {
            let v = net.edge(e).head;
            if settled[v] {
                continue;
            }
            let nd = d + weights[e];
            if nd < dist[v] {
                dist[v] = nd;
                pred_edge[v] = e;
                heap.push(State { dist: nd, vertex: v });
            } else if nd == dist[v] && e < pred_edge[v] {
                pred_edge[v] = e;
            }
        }
    }
    PathTree { origin, dist, pred_edge }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, TravelTimeFn};

    fn net(arcs: &[(usize, usize)], n: usize) -> Network {
        let edges = arcs
            .iter()
            .map(|&(tail, head)| Edge {
                tail,
                head,
                travel_time: TravelTimeFn::polynomial(vec![1.0]),
                length: 0.0,
            })
            .collect();
        Network::new(n, edges, vec![]).unwrap()
    }

    #[test]
    fn ties_go_to_lowest_edge_index() {
        // Two equal routes 0→1→3 (edges 0, 2) and 0→2→3 (edges 1, 3).
        let g = net(&[(0, 1), (0, 2), (1, 3), (2, 3)], 4);
        let t = shortest_path_tree(&g, 0, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.path_to(&g, 3).unwrap(), vec![0, 2]);
        // Parallel edges with equal weight: lowest index.
        let p = net(&[(0, 1), (0, 1)], 2);
        let t = shortest_path_tree(&p, 0, &[2.0, 2.0]);
        assert_eq!(t.path_to(&p, 1).unwrap(), vec![0]);
        let t = shortest_path_tree(&p, 0, &[2.0, 1.0]);
        assert_eq!(t.path_to(&p, 1).unwrap(), vec![1]);
    }

    #[test]
    fn later_lower_index_tie_replaces_predecessor() {
        // Edge 0 reaches 2 through 1; edge 2 is a direct arc with the same total.
        let g = net(&[(1, 2), (0, 1), (0, 2)], 3);
        let t = shortest_path_tree(&g, 0, &[1.0, 1.0, 2.0]);
        assert_eq!(t.dist[2], 2.0);
        assert_eq!(t.path_to(&g, 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn unreachable_vertex() {
        let g = net(&[(0, 1)], 3);
        let t = shortest_path_tree(&g, 0, &[1.0]);
        assert!(t.path_to(&g, 2).is_none());
        assert_eq!(t.path_to(&g, 0).unwrap(), Vec::<usize>::new());
    }
}

//! Independent reference computations against the library routines.

use proptest::prelude::*;

use fairflow::assignment::{all_or_nothing, FlowState, RecordedPath};
use fairflow::fairness::build_commodity_dag;
use fairflow::lp::{LinearProgram, LpError, RowKind};
use fairflow::{Commodity, Edge, Network, TravelTimeFn};

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

fn horner_derivative(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, v)| acc * x + i as f64 * v)
}

/// A ring `0 → 1 → … → n−1 → 0` plus chords, so every vertex reaches every other.
fn ring_network(n: usize, chords: &[(usize, usize)], coeffs: &[Vec<f64>]) -> Network {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
    pairs.extend(chords.iter().filter(|(a, b)| a != b).copied());
    let edges = pairs
        .iter()
        .zip(coeffs.iter().cycle())
        .map(|(&(tail, head), c)| Edge {
            tail,
            head,
            travel_time: TravelTimeFn::polynomial(c.clone()),
            length: 0.0,
        })
        .collect();
    let commodities = (0..n)
        .flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d)))
        .map(|(origin, destination)| Commodity { origin, destination, demand: 1.0, value_of_time: 1.0 })
        .collect();
    Network::new(n, edges, commodities).unwrap()
}

fn bellman_ford(net: &Network, origin: usize, w: &[f64]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.num_vertices()];
    dist[origin] = 0.0;
    for _ in 0..net.num_vertices() {
        for (e, edge) in net.edges().iter().enumerate() {
            if dist[edge.tail] + w[e] < dist[edge.head] {
                dist[edge.head] = dist[edge.tail] + w[e];
            }
        }
    }
    dist
}

fn coeff_strategy() -> impl Strategy<Value = Vec<f64>> {
    (0.1f64..5.0, 0.0f64..2.0, 0.0f64..0.5).prop_map(|(a, b, c)| vec![a, b, 0.0, c])
}

proptest! {
    #[test]
    fn all_or_nothing_matches_bellman_ford(
        n in 3usize..7,
        chords in prop::collection::vec((0usize..7, 0usize..7), 0..8),
        coeffs in prop::collection::vec(coeff_strategy(), 1..6),
        flows in prop::collection::vec(0.0f64..3.0, 20),
        alpha in 0.0f64..=1.0,
    ) {
        let chords: Vec<_> = chords.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let net = ring_network(n, &chords, &coeffs);
        let x: Vec<f64> = (0..net.num_edges()).map(|e| flows[e % flows.len()]).collect();
        let w: Vec<f64> = net
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let c = edge.travel_time.coefficients();
                horner(&c, x[e]) + alpha * x[e] * horner_derivative(&c, x[e])
            })
            .collect();
        let aon = all_or_nothing(&net, &x, alpha).unwrap();
        for (k, c) in net.commodities().iter().enumerate() {
            let reference = bellman_ford(&net, c.origin, &w)[c.destination];
            let along: f64 = aon.paths[k].iter().map(|&e| w[e]).sum();
            prop_assert!((aon.path_costs[k] - reference).abs() <= 1e-9 * reference.max(1.0));
            prop_assert!((along - reference).abs() <= 1e-9 * reference.max(1.0));
        }
    }
}

/// Minimum over all basic solutions of the slack form, by brute force.
fn vertex_enumeration(cost: &[f64], a: &[Vec<f64>], b: &[f64], kinds: &[RowKind]) -> Option<f64> {
    let m = a.len();
    let n = cost.len();
    // Columns: structurals, then one slack per ≤ row.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.iter().map(|r| r[j]).collect()).collect();
    let mut full_cost = cost.to_vec();
    for (i, k) in kinds.iter().enumerate() {
        if *k == RowKind::Le {
            let mut s = vec![0.0; m];
            s[i] = 1.0;
            cols.push(s);
            full_cost.push(0.0);
        }
    }
    let total = cols.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let basis: Vec<usize> = (0..total).filter(|j| mask & (1 << j) != 0).collect();
        let mut mat: Vec<Vec<f64>> =
            (0..m).map(|i| basis.iter().map(|&j| cols[j][i]).chain([b[i]]).collect()).collect();
        let mut singular = false;
        for c in 0..m {
            let p = (c..m).max_by(|&x, &y| mat[x][c].abs().total_cmp(&mat[y][c].abs())).unwrap();
            if mat[p][c].abs() < 1e-10 {
                singular = true;
                break;
            }
            mat.swap(c, p);
            for r in 0..m {
                if r != c {
                    let f = mat[r][c] / mat[c][c];
                    let pivot_row = mat[c].clone();
                    for (v, p) in mat[r].iter_mut().zip(&pivot_row).skip(c) {
                        *v -= f * p;
                    }
                }
            }
        }
        if singular {
            continue;
        }
        let xb: Vec<f64> = (0..m).map(|i| mat[i][m] / mat[i][i]).collect();
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let obj: f64 = basis.iter().zip(&xb).map(|(&j, v)| full_cost[j] * v).sum();
        best = Some(best.map_or(obj, |o: f64| o.min(obj)));
    }
    best
}

proptest! {
    #[test]
    fn simplex_matches_vertex_enumeration(
        n in 2usize..5,
        rows in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 4), 1..4),
        rhs in prop::collection::vec(0.5f64..5.0, 3),
        cost in prop::collection::vec(-3.0f64..1.0, 4),
        equality_first in any::<bool>(),
    ) {
        let m = rows.len();
        let a: Vec<Vec<f64>> = rows.iter().map(|r| r[..n].iter().map(|v| v + 0.1).collect()).collect();
        let b = &rhs[..m];
        let mut kinds = vec![RowKind::Le; m];
        if equality_first {
            kinds[0] = RowKind::Eq;
        }
        let mut lp = LinearProgram::new(m);
        lp.rhs = b.to_vec();
        lp.kinds = kinds.clone();
        for j in 0..n {
            lp.add_column(cost[j], (0..m).map(|i| (i, a[i][j])).collect());
        }
        let reference = vertex_enumeration(&cost[..n], &a, b, &kinds);
        match (lp.solve(), reference) {
            (Ok(s), Some(r)) => {
                prop_assert!((s.objective - r).abs() <= 1e-8 * r.abs().max(1.0), "{} vs {r}", s.objective);
                prop_assert!((s.objective - s.dual_objective).abs() <= 1e-8 * r.abs().max(1.0));
                for i in 0..m {
                    let lhs: f64 = (0..n).map(|j| a[i][j] * s.x[j]).sum();
                    prop_assert!(lhs <= b[i] + 1e-9);
                    if kinds[i] == RowKind::Eq {
                        prop_assert!((lhs - b[i]).abs() <= 1e-9);
                    }
                }
            }
            (Err(LpError::Infeasible(_)), None) => {}
            (got, want) => prop_assert!(false, "solver {got:?}, enumeration {want:?}"),
        }
    }
}

/// Layered DAG: `layers` stages of `width` vertices, complete between stages.
fn layered(width: usize, layers: usize, coeffs: &[f64]) -> (Network, Vec<Vec<usize>>) {
    let n = 2 + width * layers;
    let sink = n - 1;
    let vertex = |l: usize, i: usize| 1 + l * width + i;
    let mut pairs = Vec::new();
    for i in 0..width {
        pairs.push((0, vertex(0, i)));
    }
    for l in 0..layers - 1 {
        for i in 0..width {
            for j in 0..width {
                pairs.push((vertex(l, i), vertex(l + 1, j)));
            }
        }
    }
    for i in 0..width {
        pairs.push((vertex(layers - 1, i), sink));
    }
    let edges: Vec<Edge> = pairs
        .iter()
        .enumerate()
        .map(|(e, &(tail, head))| Edge {
            tail,
            head,
            travel_time: TravelTimeFn::polynomial(vec![coeffs[e % coeffs.len()], 0.5]),
            length: 0.0,
        })
        .collect();
    // Every source-sink path as an edge list.
    let mut paths: Vec<Vec<usize>> = vec![vec![]];
    let mut at: Vec<usize> = vec![0];
    loop {
        let mut next_paths = Vec::new();
        let mut next_at = Vec::new();
        for (p, &v) in paths.iter().zip(&at) {
            for (e, &(tail, head)) in pairs.iter().enumerate() {
                if tail == v {
                    let mut q = p.clone();
                    q.push(e);
                    next_paths.push(q);
                    next_at.push(head);
                }
            }
        }
        if next_paths.is_empty() {
            break;
        }
        paths = next_paths;
        at = next_at;
    }
    let net = Network::new(
        n,
        edges,
        vec![Commodity { origin: 0, destination: sink, demand: 1.0, value_of_time: 1.0 }],
    )
    .unwrap();
    (net, paths)
}

proptest! {
    #[test]
    fn dag_extreme_paths_match_enumeration(
        width in 1usize..4,
        layers in 1usize..4,
        coeffs in prop::collection::vec(0.1f64..5.0, 1..10),
        picks in prop::collection::vec((0usize..1000, 0.05f64..1.0), 1..5),
    ) {
        let (net, all_paths) = layered(width, layers, &coeffs);
        let total: f64 = picks.iter().map(|p| p.1).sum();
        let mut recorded: Vec<RecordedPath> = Vec::new();
        for &(i, w) in &picks {
            let edges = all_paths[i % all_paths.len()].clone();
            match recorded.iter_mut().find(|r| r.edges == edges) {
                Some(r) => r.flow += w / total,
                None => recorded.push(RecordedPath { edges, flow: w / total }),
            }
        }
        let fs = FlowState::from_paths(&net, 0.0, vec![recorded]).unwrap();
        let dag = build_commodity_dag(&net, &fs, 0, 1e-7).unwrap();
        let t: Vec<f64> = net
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| horner(&edge.travel_time.coefficients(), fs.edge_flow[e]))
            .collect();
        let positive: Vec<f64> = all_paths
            .iter()
            .filter(|p| p.iter().all(|&e| fs.commodity_edge_flow[0][e] > 1e-7))
            .map(|p| p.iter().map(|&e| t[e]).sum())
            .collect();
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((dag.shortest_path(&net).unwrap() - lo).abs() <= 1e-9 * lo.max(1.0));
        prop_assert!((dag.longest_path(&net).unwrap() - hi).abs() <= 1e-9 * hi.max(1.0));
    }
}

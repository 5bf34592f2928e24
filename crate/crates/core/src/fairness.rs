//! Unfairness of a flow: ratios and dispersion of path travel times within
//! each origin-destination pair.
//!
//! `U` looks at every path of the commodity's positive-flow subgraph and so
//! depends only on the per-commodity edge flows. The envy-free, used-Nash and
//! Gini metrics are evaluated on the recorded path decomposition.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::FlowState;
use crate::network::Network;

/// Edges with `x^k_e > POSITIVE_EDGE_THRESHOLD · d_k` count as carrying flow.
pub const POSITIVE_EDGE_THRESHOLD: f64 = 1e-7;
/// Commodities whose fastest path is at most this long are excluded from ratios.
pub const DEGENERATE_TIME: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("commodity {commodity}: {reason}")]
    Decomposition { commodity: usize, reason: String },
    #[error("commodity {commodity}: flow cycle remains after cancellation")]
    Cycle { commodity: usize },
    #[error("flow state does not match the network: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    U,
    EnvyFree,
    UsedNash,
    Gini,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::U, Metric::EnvyFree, Metric::UsedNash, Metric::Gini];

    pub fn name(self) -> &'static str {
        match self {
            Metric::U => "u",
            Metric::EnvyFree => "envy_free",
            Metric::UsedNash => "used_nash",
            Metric::Gini => "gini",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Value on a commodity whose travellers all see the same time.
    pub fn neutral(self) -> f64 {
        match self {
            Metric::Gini => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    /// Demand-weighted mean over commodities.
    Mean,
}

/// Positive-flow subgraph of one commodity.
#[derive(Debug, Clone)]
pub struct CommodityDag {
    pub commodity: usize,
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
    /// Vertices touched by `edges`, in topological order.
    pub topo_order: Vec<usize>,
    pub edges: Vec<usize>,
    /// Commodity flow on `edges` after cycle cancellation.
    pub flows: Vec<f64>,
    /// `t_e(x_e)` under the total flow, aligned with `edges`.
    pub weights: Vec<f64>,
    /// Total flow removed by cycle cancellation.
    pub cancelled: f64,
}

impl CommodityDag {
    fn extreme_path(&self, net: &Network, sign: f64) -> Option<f64> {
        let mut best = vec![f64::INFINITY; net.num_vertices()];
        best[self.origin] = 0.0;
        let mut by_tail: Vec<Vec<usize>> = vec![Vec::new(); net.num_vertices()];
        for (i, &e) in self.edges.iter().enumerate() {
            by_tail[net.edge(e).tail].push(i);
        }
        for &v in &self.topo_order {
            if !best[v].is_finite() {
                continue;
            }
            for &i in &by_tail[v] {
                let h = net.edge(self.edges[i]).head;
                let cand = best[v] + sign * self.weights[i];
                if cand < best[h] {
                    best[h] = cand;
                }
            }
        }
        best[self.destination].is_finite().then(|| sign * best[self.destination])
    }

    /// Fastest origin → destination time over the DAG.
    pub fn shortest_path(&self, net: &Network) -> Option<f64> {
        self.extreme_path(net, 1.0)
    }

    /// Slowest origin → destination time, as a shortest path on negated weights.
    pub fn longest_path(&self, net: &Network) -> Option<f64> {
        self.extreme_path(net, -1.0)
    }

    /// Largest flow-conservation violation at an intermediate vertex.
    pub fn conservation_residual(&self, net: &Network) -> f64 {
        let mut balance = vec![0.0; net.num_vertices()];
        for (&e, &f) in self.edges.iter().zip(&self.flows) {
            balance[net.edge(e).tail] -= f;
            balance[net.edge(e).head] += f;
        }
        balance
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != self.origin && v != self.destination)
            .map(|(_, b)| b.abs())
            .fold(0.0, f64::max)
    }
}

/// Finds a directed cycle among `edges` (indices into `edges`) by depth-first search.
fn find_cycle(net: &Network, edges: &[usize]) -> Option<Vec<usize>> {
    let n = net.num_vertices();
    let mut by_tail: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &e) in edges.iter().enumerate() {
        by_tail[net.edge(e).tail].push(i);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    let mut via = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != 0 || by_tail[root].is_empty() {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < by_tail[v].len() {
                let i = by_tail[v][*next];
                *next += 1;
                let h = net.edge(edges[i]).head;
                match color[h] {
                    0 => {
                        color[h] = 1;
                        via[h] = i;
                        stack.push((h, 0));
                    }
                    1 => {
                        let mut cycle = vec![i];
                        let mut u = v;
                        while u != h {
                            let j = via[u];
                            cycle.push(j);
                            u = net.edge(edges[j]).tail;
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

fn topological_order(net: &Network, edges: &[usize]) -> Option<Vec<usize>> {
    let n = net.num_vertices();
    let mut indeg = vec![0usize; n];
    let mut touched = vec![false; n];
    let mut by_tail: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &e in edges {
        let edge = net.edge(e);
        indeg[edge.head] += 1;
        touched[edge.tail] = true;
        touched[edge.head] = true;
        by_tail[edge.tail].push(edge.head);
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| touched[v] && indeg[v] == 0).collect();
    let mut order = Vec::new();
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &h in &by_tail[v] {
            indeg[h] -= 1;
            if indeg[h] == 0 {
                queue.push_back(h);
            }
        }
    }
    let count = touched.iter().filter(|&&t| t).count();
    (order.len() == count).then_some(order)
}

/// Builds the positive-flow DAG of commodity `k`, cancelling any flow cycles.
pub fn build_commodity_dag(
    net: &Network,
    fs: &FlowState,
    k: usize,
    threshold: f64,
) -> Result<CommodityDag, FairnessError> {
    let c = net.commodities().get(k).ok_or_else(|| {
        FairnessError::Mismatch(format!("commodity {k} not in network"))
    })?;
    let xk = fs
        .commodity_edge_flow
        .get(k)
        .filter(|xk| xk.len() == net.num_edges() && fs.edge_flow.len() == net.num_edges())
        .ok_or_else(|| FairnessError::Mismatch(format!("no edge flows for commodity {k}")))?;
    let cut = threshold * c.demand;
    let mut edges: Vec<usize> = (0..xk.len()).filter(|&e| xk[e] > cut).collect();
    let mut flows: Vec<f64> = edges.iter().map(|&e| xk[e]).collect();
    let mut cancelled = 0.0;
    while let Some(cycle) = find_cycle(net, &edges) {
        let bottleneck = cycle.iter().map(|&i| flows[i]).fold(f64::INFINITY, f64::min);
        for &i in &cycle {
            flows[i] -= bottleneck;
        }
        cancelled += bottleneck;
        let keep: Vec<bool> = flows.iter().map(|&f| f > cut).collect();
        let mut it = keep.iter();
        edges.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        flows.retain(|_| *it.next().unwrap());
    }
    let topo_order =
        topological_order(net, &edges).ok_or(FairnessError::Cycle { commodity: k })?;
    let weights = edges.iter().map(|&e| net.edge(e).travel_time.eval(fs.edge_flow[e])).collect();
    Ok(CommodityDag {
        commodity: k,
        origin: c.origin,
        destination: c.destination,
        demand: c.demand,
        topo_order,
        edges,
        flows,
        weights,
        cancelled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfairnessReport {
    pub metric: Metric,
    /// `None` for commodities excluded from the aggregate.
    pub per_commodity: Vec<Option<f64>>,
    pub aggregate: f64,
    pub aggregation: Aggregation,
    /// Commodities with degenerate (zero) travel times.
    pub excluded: Vec<usize>,
}

impl UnfairnessReport {
    fn assemble(
        net: &Network,
        metric: Metric,
        per_commodity: Vec<Option<f64>>,
        aggregation: Aggregation,
    ) -> Self {
        let excluded: Vec<usize> =
            (0..per_commodity.len()).filter(|&k| per_commodity[k].is_none()).collect();
        let aggregate = match aggregation {
            Aggregation::Max => per_commodity.iter().flatten().copied().fold(metric.neutral(), f64::max),
            Aggregation::Mean => {
                let (num, den) = per_commodity
                    .iter()
                    .enumerate()
                    .filter_map(|(k, v)| v.map(|v| (v, net.commodity(k).demand)))
                    .fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
                if den > 0.0 { num / den } else { metric.neutral() }
            }
        };
        Self { metric, per_commodity, aggregate, aggregation, excluded }
    }

    /// `metric,commodity,value` rows; the aggregate uses commodity `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,commodity,value\n");
        for (k, v) in self.per_commodity.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = writeln!(out, "{},{},{}", self.metric.name(), k, crate::format::float(*v));
                }
                None => {
                    let _ = writeln!(out, "{},{},excluded", self.metric.name(), k);
                }
            }
        }
        let _ = writeln!(out, "{},all,{}", self.metric.name(), crate::format::float(self.aggregate));
        out
    }
}

/// Per-commodity quantities shared by all four metrics.
#[derive(Debug, Clone)]
struct CommodityTimes {
    dag_shortest: f64,
    dag_longest: f64,
    /// `(flow, travel time)` of recorded paths with positive flow.
    paths: Vec<(f64, f64)>,
}

fn commodity_times(
    net: &Network,
    fs: &FlowState,
    k: usize,
    threshold: f64,
) -> Result<CommodityTimes, FairnessError> {
    let dag = build_commodity_dag(net, fs, k, threshold)?;
    let no_path = || FairnessError::Decomposition {
        commodity: k,
        reason: "no origin-destination path in the positive-flow subgraph".into(),
    };
    let dag_shortest = dag.shortest_path(net).ok_or_else(no_path)?;
    let dag_longest = dag.longest_path(net).ok_or_else(no_path)?;
    let recorded = fs
        .recorded_paths
        .get(k)
        .ok_or_else(|| FairnessError::Mismatch(format!("no recorded paths for commodity {k}")))?;
    let paths: Vec<(f64, f64)> = recorded
        .iter()
        .filter(|p| p.flow > 0.0)
        .map(|p| (p.flow, fs.path_travel_time(net, &p.edges)))
        .collect();
    if paths.is_empty() {
        return Err(FairnessError::Decomposition {
            commodity: k,
            reason: "no recorded path with positive flow".into(),
        });
    }
    Ok(CommodityTimes { dag_shortest, dag_longest, paths })
}

fn all_times(
    net: &Network,
    fs: &FlowState,
    threshold: f64,
) -> Result<Vec<CommodityTimes>, FairnessError> {
    if fs.commodity_edge_flow.len() != net.num_commodities() {
        return Err(FairnessError::Mismatch(format!(
            "{} commodity flows for {} commodities",
            fs.commodity_edge_flow.len(),
            net.num_commodities()
        )));
    }
    (0..net.num_commodities())
        .into_par_iter()
        .map(|k| commodity_times(net, fs, k, threshold))
        .collect()
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > DEGENERATE_TIME).then(|| num / den)
}

fn metric_value(metric: Metric, t: &CommodityTimes, demand: f64) -> Option<f64> {
    let max_rec = t.paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min_rec = t.paths.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    match metric {
        Metric::U => ratio(t.dag_longest, t.dag_shortest),
        Metric::EnvyFree => ratio(max_rec, min_rec),
        Metric::UsedNash => ratio(max_rec, t.dag_shortest),
        Metric::Gini => {
            let den: f64 = 2.0 * demand * t.paths.iter().map(|&(f, tt)| f * tt).sum::<f64>();
            if den <= DEGENERATE_TIME * demand {
                return None;
            }
            let mut num = 0.0;
            for &(fp, tp) in &t.paths {
                for &(fq, tq) in &t.paths {
                    num += fp * fq * (tq - tp).abs();
                }
            }
            Some(num / den)
        }
    }
}

/// Options for metric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessOptions {
    /// Fraction of demand above which a commodity edge flow is positive.
    pub edge_threshold: f64,
    pub gini_aggregation: Aggregation,
}

impl Default for FairnessOptions {
    fn default() -> Self {
        Self { edge_threshold: POSITIVE_EDGE_THRESHOLD, gini_aggregation: Aggregation::Max }
    }
}

fn report_from_times(
    net: &Network,
    metric: Metric,
    times: &[CommodityTimes],
    opts: &FairnessOptions,
) -> UnfairnessReport {
    let values = times
        .iter()
        .enumerate()
        .map(|(k, t)| metric_value(metric, t, net.commodity(k).demand))
        .collect();
    let aggregation = if metric == Metric::Gini { opts.gini_aggregation } else { Aggregation::Max };
    UnfairnessReport::assemble(net, metric, values, aggregation)
}

/// Evaluates one metric.
pub fn unfairness(
    net: &Network,
    fs: &FlowState,
    metric: Metric,
    opts: &FairnessOptions,
) -> Result<UnfairnessReport, FairnessError> {
    let times = all_times(net, fs, opts.edge_threshold)?;
    Ok(report_from_times(net, metric, &times, opts))
}

/// Worst ratio of slowest to fastest positive path, over commodities.
pub fn unfairness_u(net: &Network, fs: &FlowState) -> Result<UnfairnessReport, FairnessError> {
    unfairness(net, fs, Metric::U, &FairnessOptions::default())
}

pub fn unfairness_envy_free(
    net: &Network,
    fs: &FlowState,
) -> Result<UnfairnessReport, FairnessError> {
    unfairness(net, fs, Metric::EnvyFree, &FairnessOptions::default())
}

pub fn unfairness_used_nash(
    net: &Network,
    fs: &FlowState,
) -> Result<UnfairnessReport, FairnessError> {
    unfairness(net, fs, Metric::UsedNash, &FairnessOptions::default())
}

pub fn unfairness_gini(net: &Network, fs: &FlowState) -> Result<UnfairnessReport, FairnessError> {
    unfairness(net, fs, Metric::Gini, &FairnessOptions::default())
}

/// All four metrics from a single pass over the commodities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub u: UnfairnessReport,
    pub envy_free: UnfairnessReport,
    pub used_nash: UnfairnessReport,
    pub gini: UnfairnessReport,
}

impl FairnessSummary {
    pub fn get(&self, metric: Metric) -> &UnfairnessReport {
        match metric {
            Metric::U => &self.u,
            Metric::EnvyFree => &self.envy_free,
            Metric::UsedNash => &self.used_nash,
            Metric::Gini => &self.gini,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,commodity,value\n");
        for m in Metric::ALL {
            out.extend(self.get(m).to_csv().lines().skip(1).map(|l| format!("{l}\n")));
        }
        out
    }
}

pub fn all_metrics(
    net: &Network,
    fs: &FlowState,
    opts: &FairnessOptions,
) -> Result<FairnessSummary, FairnessError> {
    let times = all_times(net, fs, opts.edge_threshold)?;
    Ok(FairnessSummary {
        u: report_from_times(net, Metric::U, &times, opts),
        envy_free: report_from_times(net, Metric::EnvyFree, &times, opts),
        used_nash: report_from_times(net, Metric::UsedNash, &times, opts),
        gini: report_from_times(net, Metric::Gini, &times, opts),
    })
}

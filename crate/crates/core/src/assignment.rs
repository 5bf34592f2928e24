//! Interpolated traffic assignment solved by the Frank-Wolfe method.
//!
//! The interpolated objective `α h_SO(x) + (1 − α) h_UE(x)` is minimized as a
//! UE-type program whose edge cost is `c_e(y, α) = t_e(y) + α y t_e'(y)`, so
//! `α = 0` gives the user equilibrium and `α = 1` the system optimum.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkError, TravelTimeFn};
use crate::shortest_path::shortest_path_tree;

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("commodity {commodity}: no route from {} to {}", .origin + 1, .destination + 1)]
    Routing { commodity: usize, origin: usize, destination: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// How each iteration picks its target point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Plain all-or-nothing vertex.
    #[default]
    FrankWolfe,
    /// Conjugate Frank-Wolfe: mixes the previous target point with the new
    /// all-or-nothing vertex so that successive directions are conjugate
    /// with respect to the diagonal Hessian.
    Conjugate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub target_relative_gap: f64,
    /// Bracket width at which the line-search bisection stops.
    pub line_search_tolerance: f64,
    /// Recorded paths carrying less than this fraction of the commodity
    /// demand are discarded at the end of the solve.
    pub path_record_threshold: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            target_relative_gap: 1e-5,
            line_search_tolerance: 1e-10,
            path_record_threshold: 1e-4,
            direction: Direction::FrankWolfe,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), AssignError> {
        if self.max_iterations < 1 {
            return Err(AssignError::Parameter("max_iterations must be >= 1".into()));
        }
        if !(self.target_relative_gap > 0.0) || !(self.line_search_tolerance > 0.0) {
            return Err(AssignError::Parameter("tolerances must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.path_record_threshold) {
            return Err(AssignError::Parameter("path_record_threshold must be in [0, 1)".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), AssignError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AssignError::Parameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_len(expected: usize, found: usize) -> Result<(), AssignError> {
    if expected != found {
        return Err(AssignError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `c_e(y, α) = t(y) + α y t'(y)`.
pub fn interpolated_cost(f: &TravelTimeFn, y: f64, alpha: f64) -> Result<f64, AssignError> {
    if !(y >= 0.0) {
        return Err(AssignError::Domain(format!("flow must be nonnegative, got {y}")));
    }
    check_alpha(alpha)?;
    Ok(f.eval(y) + alpha * y * f.derivative(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    /// Total travel time `Σ x_e t_e(x_e)`.
    pub h_so: f64,
    /// Beckmann potential `Σ ∫_0^{x_e} t_e`.
    pub h_ue: f64,
    /// `α h_so + (1 − α) h_ue`.
    pub h_interpolated: f64,
}

impl Objectives {
    fn new(h_so: f64, h_ue: f64, alpha: f64) -> Self {
        Self { h_so, h_ue, h_interpolated: alpha * h_so + (1.0 - alpha) * h_ue }
    }
}

/// Returns `(h_SO, h_UE)` at edge flows `x`.
pub fn objective_values(net: &Network, x: &[f64]) -> Result<(f64, f64), AssignError> {
    check_len(net.num_edges(), x.len())?;
    if let Some(bad) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(AssignError::Domain(format!("edge flow {bad} is negative")));
    }
    Ok(raw_objectives(net, x))
}

fn raw_objectives(net: &Network, x: &[f64]) -> (f64, f64) {
    net.edges().iter().zip(x).fold((0.0, 0.0), |(so, ue), (e, &xe)| {
        (so + xe * e.travel_time.eval(xe), ue + e.travel_time.integral(xe))
    })
}

/// Edge costs of the interpolated program, with optional constant tolls.
#[derive(Clone, Copy)]
pub(crate) struct CostModel<'a> {
    net: &'a Network,
    alpha: f64,
    tolls: Option<&'a [f64]>,
}

impl<'a> CostModel<'a> {
    pub(crate) fn new(net: &'a Network, alpha: f64, tolls: Option<&'a [f64]>) -> Self {
        Self { net, alpha, tolls }
    }

    fn toll(&self, e: usize) -> f64 {
        self.tolls.map_or(0.0, |t| t[e])
    }

    fn cost(&self, e: usize, y: f64) -> f64 {
        let f = &self.net.edge(e).travel_time;
        f.eval(y) + self.alpha * y * f.derivative(y) + self.toll(e)
    }

    fn cost_derivative(&self, e: usize, y: f64) -> f64 {
        let f = &self.net.edge(e).travel_time;
        (1.0 + self.alpha) * f.derivative(y) + self.alpha * y * f.second_derivative(y)
    }

    fn costs(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(e, &y)| self.cost(e, y)).collect()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (so, ue) = raw_objectives(self.net, x);
        let tolled: f64 = x.iter().enumerate().map(|(e, &y)| self.toll(e) * y).sum();
        self.alpha * so + (1.0 - self.alpha) * ue + tolled
    }

    /// Derivative of the objective along `x + λ (y − x)`.
    fn directional_derivative(&self, x: &[f64], y: &[f64], lambda: f64) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(e, (&xe, &ye))| {
                let d = ye - xe;
                if d == 0.0 {
                    0.0
                } else {
                    d * self.cost(e, (xe + lambda * d).max(0.0))
                }
            })
            .sum()
    }
}

/// Result of loading every commodity on its current shortest path.
#[derive(Debug, Clone, PartialEq)]
pub struct AllOrNothing {
    pub flows: Vec<f64>,
    /// Edge sequence of the chosen path, per commodity.
    pub paths: Vec<Vec<usize>>,
    /// Cost of the chosen path under the weights used, per commodity.
    pub path_costs: Vec<f64>,
}

pub(crate) fn all_or_nothing_with_weights(
    net: &Network,
    weights: &[f64],
) -> Result<AllOrNothing, AssignError> {
    let mut flows = vec![0.0; net.num_edges()];
    let mut paths = Vec::with_capacity(net.num_commodities());
    let mut path_costs = Vec::with_capacity(net.num_commodities());
    let mut tree = None;
    for (k, c) in net.commodities().iter().enumerate() {
        if tree.as_ref().is_none_or(|t: &crate::shortest_path::PathTree| t.origin != c.origin) {
            tree = Some(shortest_path_tree(net, c.origin, weights));
        }
        let t = tree.as_ref().expect("tree built above");
        let path = t.path_to(net, c.destination).ok_or(AssignError::Routing {
            commodity: k,
            origin: c.origin,
            destination: c.destination,
        })?;
        for &e in &path {
            flows[e] += c.demand;
        }
        path_costs.push(t.dist[c.destination]);
        paths.push(path);
    }
    Ok(AllOrNothing { flows, paths, path_costs })
}

/// Routes every commodity on a shortest path under `c_e(x_e, α)`.
pub fn all_or_nothing(net: &Network, x: &[f64], alpha: f64) -> Result<AllOrNothing, AssignError> {
    objective_values(net, x)?;
    check_alpha(alpha)?;
    all_or_nothing_with_weights(net, &CostModel::new(net, alpha, None).costs(x))
}

/// Exact step in `[0, 1]` along `y − x` by bisection on the directional derivative.
pub fn line_search(net: &Network, x: &[f64], y: &[f64], alpha: f64) -> Result<f64, AssignError> {
    check_len(net.num_edges(), x.len())?;
    check_len(net.num_edges(), y.len())?;
    check_alpha(alpha)?;
    Ok(line_search_with(&CostModel::new(net, alpha, None), x, y, 1e-10))
}

fn line_search_with(model: &CostModel<'_>, x: &[f64], y: &[f64], tol: f64) -> f64 {
    if model.directional_derivative(x, y, 0.0) >= 0.0 {
        return 0.0;
    }
    if model.directional_derivative(x, y, 1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if model.directional_derivative(x, y, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn gap_from(costs: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let cx: f64 = costs.iter().zip(x).map(|(c, v)| c * v).sum();
    let cy: f64 = costs.iter().zip(y).map(|(c, v)| c * v).sum();
    if cx <= 0.0 {
        0.0
    } else {
        ((cx - cy) / cx).max(0.0)
    }
}

/// Normalized Frank-Wolfe duality gap `(c·x − c·y) / c·x` with `y` the
/// all-or-nothing response to `x`.
pub fn relative_gap(net: &Network, x: &[f64], alpha: f64) -> Result<f64, AssignError> {
    check_alpha(alpha)?;
    relative_gap_with(&CostModel::new(net, alpha, None), x)
}

pub(crate) fn relative_gap_with(model: &CostModel<'_>, x: &[f64]) -> Result<f64, AssignError> {
    objective_values(model.net, x)?;
    let costs = model.costs(x);
    let aon = all_or_nothing_with_weights(model.net, &costs)?;
    Ok(gap_from(&costs, x, &aon.flows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedPath {
    pub edges: Vec<usize>,
    pub flow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Interpolated (plus toll) objective after the step.
    pub objective: f64,
    /// Gap measured before the step.
    pub relative_gap: f64,
    pub step: f64,
}

/// Solution of one interpolated assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub alpha: f64,
    pub edge_flow: Vec<f64>,
    /// Per commodity, per edge.
    pub commodity_edge_flow: Vec<Vec<f64>>,
    pub recorded_paths: Vec<Vec<RecordedPath>>,
    pub objectives: Objectives,
    pub relative_gap: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl FlowState {
    /// Assembles a state from path flows; edge flows are the path sums.
    pub fn from_paths(
        net: &Network,
        alpha: f64,
        recorded_paths: Vec<Vec<RecordedPath>>,
    ) -> Result<Self, AssignError> {
        check_alpha(alpha)?;
        check_len(net.num_commodities(), recorded_paths.len())?;
        let m = net.num_edges();
        let mut edge_flow = vec![0.0; m];
        let mut commodity_edge_flow = Vec::with_capacity(recorded_paths.len());
        for paths in &recorded_paths {
            let mut xk = vec![0.0; m];
            for p in paths {
                for &e in &p.edges {
                    if e >= m {
                        return Err(AssignError::DimensionMismatch { expected: m, found: e + 1 });
                    }
                    xk[e] += p.flow;
                }
            }
            for (total, v) in edge_flow.iter_mut().zip(&xk) {
                *total += v;
            }
            commodity_edge_flow.push(xk);
        }
        let (h_so, h_ue) = objective_values(net, &edge_flow)?;
        let relative_gap = if net.num_commodities() == 0 {
            0.0
        } else {
            relative_gap(net, &edge_flow, alpha)?
        };
        Ok(Self {
            alpha,
            edge_flow,
            commodity_edge_flow,
            recorded_paths,
            objectives: Objectives::new(h_so, h_ue, alpha),
            relative_gap,
            iterations: 0,
            history: Vec::new(),
        })
    }

    /// Travel time of a path under the state's total edge flows.
    pub fn path_travel_time(&self, net: &Network, edges: &[usize]) -> f64 {
        edges.iter().map(|&e| net.edge(e).travel_time.eval(self.edge_flow[e])).sum()
    }

    pub fn to_json(&self, net: &Network) -> Result<String, AssignError> {
        let commodities = self
            .recorded_paths
            .iter()
            .enumerate()
            .map(|(k, paths)| {
                let c = net.commodity(k);
                CommodityPathsJson {
                    commodity: k,
                    origin: c.origin + 1,
                    destination: c.destination + 1,
                    paths: paths
                        .iter()
                        .map(|p| PathJson {
                            vertices: vertex_sequence(net, c.origin, &p.edges),
                            edges: p.edges.clone(),
                            flow: p.flow,
                        })
                        .collect(),
                }
            })
            .collect();
        let doc = FlowStateJson {
            alpha: self.alpha,
            edge_flow: self.edge_flow.clone(),
            objectives: self.objectives,
            relative_gap: self.relative_gap,
            iterations: self.iterations,
            recorded_paths: commodities,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| AssignError::Network(e.into()))
    }
}

/// 1-based vertex sequence of a path starting at `origin`.
pub fn vertex_sequence(net: &Network, origin: usize, edges: &[usize]) -> Vec<usize> {
    std::iter::once(origin + 1).chain(edges.iter().map(|&e| net.edge(e).head + 1)).collect()
}

#[derive(Serialize, Deserialize)]
struct PathJson {
    vertices: Vec<usize>,
    edges: Vec<usize>,
    flow: f64,
}

#[derive(Serialize, Deserialize)]
struct CommodityPathsJson {
    commodity: usize,
    origin: usize,
    destination: usize,
    paths: Vec<PathJson>,
}

#[derive(Serialize, Deserialize)]
struct FlowStateJson {
    alpha: f64,
    edge_flow: Vec<f64>,
    objectives: Objectives,
    relative_gap: f64,
    iterations: usize,
    recorded_paths: Vec<CommodityPathsJson>,
}

/// Paths seen for one commodity, with weights for the current iterate and
/// for the current target point.
#[derive(Default)]
struct PathRecord {
    index: HashMap<Vec<usize>, usize>,
    paths: Vec<Vec<usize>>,
    current: Vec<f64>,
    target: Vec<f64>,
}

impl PathRecord {
    fn slot(&mut self, path: &[usize]) -> usize {
        if let Some(&i) = self.index.get(path) {
            return i;
        }
        let i = self.paths.len();
        self.index.insert(path.to_vec(), i);
        self.paths.push(path.to_vec());
        self.current.push(0.0);
        self.target.push(0.0);
        i
    }

    /// `target ← keep · target + (1 − keep) · demand on path`.
    fn blend_target(&mut self, path: &[usize], demand: f64, keep: f64) {
        let i = self.slot(path);
        for w in &mut self.target {
            *w *= keep;
        }
        self.target[i] += (1.0 - keep) * demand;
    }

    fn step(&mut self, lambda: f64) {
        for (w, t) in self.current.iter_mut().zip(&self.target) {
            *w = (1.0 - lambda) * *w + lambda * t;
        }
    }

    /// Drops paths below `threshold · demand` and rescales survivors to `demand`.
    fn pruned(&self, demand: f64, threshold: f64) -> Vec<RecordedPath> {
        let cut = threshold * demand;
        let mut kept: Vec<RecordedPath> = self
            .paths
            .iter()
            .zip(&self.current)
            .filter(|(_, &w)| w > 0.0 && w >= cut)
            .map(|(p, &w)| RecordedPath { edges: p.clone(), flow: w })
            .collect();
        if kept.is_empty() {
            // Unreachable for threshold < 1 with weights summing to demand; kept for safety.
            let (i, _) = self
                .current
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("at least one path recorded");
            kept.push(RecordedPath { edges: self.paths[i].clone(), flow: demand });
        }
        let total: f64 = kept.iter().map(|p| p.flow).sum();
        for p in &mut kept {
            p.flow *= demand / total;
        }
        kept
    }
}

/// Solves I-TAP_α.
pub fn solve(net: &Network, alpha: f64, cfg: &SolverConfig) -> Result<FlowState, AssignError> {
    solve_inner(net, alpha, None, cfg)
}

/// Solves I-TAP_α with constant per-edge tolls added to the edge cost.
pub fn solve_tolled(
    net: &Network,
    alpha: f64,
    tolls: &[f64],
    cfg: &SolverConfig,
) -> Result<FlowState, AssignError> {
    check_len(net.num_edges(), tolls.len())?;
    solve_inner(net, alpha, Some(tolls), cfg)
}

fn solve_inner(
    net: &Network,
    alpha: f64,
    tolls: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<FlowState, AssignError> {
    cfg.validate()?;
    check_alpha(alpha)?;
    let model = CostModel::new(net, alpha, tolls);
    let m = net.num_edges();
    let commodities = net.commodities();
    if commodities.is_empty() {
        return FlowState::from_paths(net, alpha, Vec::new());
    }

    let mut records: Vec<PathRecord> = commodities.iter().map(|_| PathRecord::default()).collect();
    let zero = vec![0.0; m];
    let start = all_or_nothing_with_weights(net, &model.costs(&zero))?;
    for ((rec, path), c) in records.iter_mut().zip(&start.paths).zip(commodities) {
        rec.blend_target(path, c.demand, 0.0);
        rec.step(1.0);
    }
    let mut x = start.flows;
    let mut target = x.clone();
    let mut history = Vec::new();
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        let costs = model.costs(&x);
        let aon = all_or_nothing_with_weights(net, &costs)?;
        let gap = gap_from(&costs, &x, &aon.flows);
        if gap <= cfg.target_relative_gap {
            break;
        }
        let keep = match cfg.direction {
            Direction::FrankWolfe => 0.0,
            Direction::Conjugate if it == 0 => 0.0,
            Direction::Conjugate => conjugate_weight(&model, &x, &target, &aon.flows),
        };
        for (t, y) in target.iter_mut().zip(&aon.flows) {
            *t = keep * *t + (1.0 - keep) * y;
        }
        for ((rec, path), c) in records.iter_mut().zip(&aon.paths).zip(commodities) {
            rec.blend_target(path, c.demand, keep);
        }
        let lambda = line_search_with(&model, &x, &target, cfg.line_search_tolerance);
        for (xe, te) in x.iter_mut().zip(&target) {
            *xe = ((1.0 - lambda) * *xe + lambda * te).max(0.0);
        }
        for rec in &mut records {
            rec.step(lambda);
        }
        iterations += 1;
        history.push(IterationRecord {
            iteration: iterations,
            objective: model.objective(&x),
            relative_gap: gap,
            step: lambda,
        });
    }

    let paths = records
        .iter()
        .zip(commodities)
        .map(|(rec, c)| rec.pruned(c.demand, cfg.path_record_threshold))
        .collect();
    let mut state = FlowState::from_paths(net, alpha, paths)?;
    if tolls.is_some() {
        state.relative_gap = relative_gap_with(&model, &state.edge_flow)?;
    }
    state.iterations = iterations;
    state.history = history;
    Ok(state)
}

const CONJUGATE_DELTA: f64 = 0.01;

/// Weight on the previous target point that makes the new direction
/// conjugate to the previous one, clipped to `[0, 1 − δ]`.
fn conjugate_weight(model: &CostModel<'_>, x: &[f64], prev: &[f64], aon: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for e in 0..x.len() {
        let h = model.cost_derivative(e, x[e]);
        let a = prev[e] - x[e];
        num += a * h * (aon[e] - x[e]);
        den += a * h * (aon[e] - prev[e]);
    }
    if den == 0.0 || !den.is_finite() {
        return 0.0;
    }
    let w = num / den;
    if w > 1.0 - CONJUGATE_DELTA {
        1.0 - CONJUGATE_DELTA
    } else if w >= 0.0 {
        w
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_pigou;

    fn pigou() -> Network {
        build_pigou(1, 0.0, 1.0).unwrap()
    }

    #[test]
    fn interpolated_cost_examples() {
        let lin = TravelTimeFn::polynomial(vec![0.0, 1.0]);
        assert!((interpolated_cost(&lin, 2.0 / 3.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let bpr = TravelTimeFn::bpr(1.0, 1.0).unwrap();
        assert!((interpolated_cost(&bpr, 1.0, 1.0).unwrap() - 1.75).abs() < 1e-14);
        assert_eq!(interpolated_cost(&bpr, 0.7, 0.0).unwrap(), bpr.eval(0.7));
        assert!(matches!(interpolated_cost(&lin, -1.0, 0.5), Err(AssignError::Domain(_))));
        assert!(matches!(interpolated_cost(&lin, 1.0, 1.5), Err(AssignError::Parameter(_))));
    }

    #[test]
    fn objective_examples() {
        let net = pigou();
        assert_eq!(objective_values(&net, &[0.0, 1.0]).unwrap(), (1.0, 0.5));
        let (so, ue) = objective_values(&net, &[0.5, 0.5]).unwrap();
        assert!((so - 0.75).abs() < 1e-15 && (ue - 0.625).abs() < 1e-15);
        assert_eq!(objective_values(&net, &[0.0, 0.0]).unwrap(), (0.0, 0.0));
        assert!(matches!(
            objective_values(&net, &[1.0]),
            Err(AssignError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn aon_examples() {
        let net = pigou();
        let r = all_or_nothing(&net, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(r.flows, vec![0.0, 1.0]);
        assert_eq!(r.paths, vec![vec![1]]);
        let r = all_or_nothing(&net, &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(r.flows, vec![1.0, 0.0]);
        assert_eq!(r.path_costs, vec![1.0]);
    }

    #[test]
    fn line_search_examples() {
        let net = pigou();
        assert_eq!(line_search(&net, &[0.3, 0.7], &[0.3, 0.7], 0.5).unwrap(), 0.0);
        let l = line_search(&net, &[0.0, 1.0], &[1.0, 0.0], 1.0).unwrap();
        assert!((l - 0.5).abs() < 1e-9);
        assert_eq!(line_search(&net, &[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn relative_gap_examples() {
        let net = pigou();
        assert!(relative_gap(&net, &[0.0, 1.0], 0.0).unwrap() <= 1e-12);
        assert!((relative_gap(&net, &[1.0, 0.0], 0.0).unwrap() - 1.0).abs() < 1e-15);
        let empty = net.with_commodities(vec![]);
        assert_eq!(relative_gap(&empty, &[0.0, 0.0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn pigou_solutions() {
        let net = pigou();
        let cfg = SolverConfig::default();
        let ue = solve(&net, 0.0, &cfg).unwrap();
        assert!((ue.edge_flow[1] - 1.0).abs() < 1e-9);
        assert!((ue.objectives.h_so - 1.0).abs() < 1e-9);
        let so = solve(&net, 1.0, &cfg).unwrap();
        assert!((so.edge_flow[0] - 0.5).abs() < 1e-6);
        assert!((so.objectives.h_so - 0.75).abs() < 1e-9);
        let mid = solve(&net, 0.5, &cfg).unwrap();
        assert!((mid.edge_flow[1] - 2.0 / 3.0).abs() < 1e-6);
        let h = mid.objectives;
        assert!((h.h_interpolated - (0.5 * h.h_so + 0.5 * h.h_ue)).abs() <= 1e-12);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        let net = pigou();
        assert!(matches!(
            solve(&net, 1.2, &SolverConfig::default()),
            Err(AssignError::Parameter(_))
        ));
        let bad = SolverConfig { max_iterations: 0, ..SolverConfig::default() };
        assert!(matches!(solve(&net, 0.5, &bad), Err(AssignError::Parameter(_))));
    }

    #[test]
    fn recorded_paths_meet_demand_and_match_edge_flows() {
        let net = pigou();
        let s = solve(&net, 0.5, &SolverConfig::default()).unwrap();
        let total: f64 = s.recorded_paths[0].iter().map(|p| p.flow).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for e in 0..2 {
            assert!((s.commodity_edge_flow[0][e] - s.edge_flow[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn tolled_solve_shifts_equilibrium() {
        let net = pigou();
        let s = solve_tolled(&net, 0.0, &[0.0, 1.0 / 3.0], &SolverConfig::default()).unwrap();
        assert!((s.edge_flow[1] - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn flow_state_json_lists_vertex_sequences() {
        let net = pigou();
        let s = solve(&net, 1.0, &SolverConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json(&net).unwrap()).unwrap();
        assert_eq!(v["alpha"], 1.0);
        assert_eq!(v["recorded_paths"][0]["paths"][0]["vertices"], serde_json::json!([1, 2]));
        assert!(v["objectives"]["h_so"].as_f64().unwrap() > 0.7);
    }
}

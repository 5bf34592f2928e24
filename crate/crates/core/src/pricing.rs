//! Tolls that make an interpolated flow a user equilibrium.
//!
//! Homogeneous users get marginal-cost tolls. Heterogeneous users (several
//! values of time per commodity) get the capacity duals of a path LP. The LP
//! starts from the recorded paths and adds any path that prices out under the
//! current duals; a shortest-path query per class then certifies that no path
//! outside the LP undercuts the ones it uses.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_tolled, AssignError, FlowState, SolverConfig};
use crate::format::float;
use crate::lp::{LinearProgram, LpError, RowKind};
use crate::network::Network;
use crate::shortest_path::shortest_path_tree;

/// Capacity slack allowed per edge, relative to `1 + x_e`.
pub const TIGHTNESS_TOLERANCE: f64 = 1e-6;
/// Recorded positive paths must price within this of the class minimum.
pub const SLACKNESS_TOLERANCE: f64 = 1e-6;
/// Tolled re-solve must reproduce the flow within this deviation.
pub const FLOW_MATCH_TOLERANCE: f64 = 1e-3;
/// Generalized-cost spread allowed across recorded paths.
pub const COST_SPREAD_TOLERANCE: f64 = 1e-3;
const NEGATIVE_DUAL_LIMIT: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("recorded paths cannot reproduce the edge flows ({0}); lower the path recording threshold")]
    Restriction(String),
    #[error("capacity constraints are not tight (max scaled slack {0:.3e}); flow cannot be enforced")]
    NotTight(f64),
    #[error("capacity dual on edge {edge} is {value:.3e}, below zero")]
    NegativeDual { edge: usize, value: f64 },
    #[error("values of time differ across commodities; use the class LP")]
    Heterogeneous,
    #[error("invalid class partition: {0}")]
    Classes(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error(transparent)]
    Assign(#[from] AssignError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MarginalCost,
    LpDual,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::MarginalCost => "marginal_cost",
            Provenance::LpDual => "lp_dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TollVector {
    pub tolls: Vec<f64>,
    pub provenance: Provenance,
    pub alpha: f64,
}

impl TollVector {
    /// `edge_id,toll,provenance,alpha` with 1-based edge ids.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_id,toll,provenance,alpha\n");
        for (e, &t) in self.tolls.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e + 1,
                float(t),
                self.provenance.name(),
                float(self.alpha)
            );
        }
        out
    }

    /// Same tolls in units where every value of time is multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { tolls: self.tolls.iter().map(|t| t * c).collect(), ..self.clone() }
    }
}

/// `τ_e = α x_e t_e'(x_e)`.
pub fn marginal_tolls(net: &Network, fs: &FlowState) -> TollVector {
    let tolls = net
        .edges()
        .iter()
        .zip(&fs.edge_flow)
        .map(|(e, &x)| fs.alpha * x * e.travel_time.derivative(x))
        .collect();
    TollVector { tolls, provenance: Provenance::MarginalCost, alpha: fs.alpha }
}

/// Outcome of checking that tolls turn a flow into a user equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnforcementReport {
    pub alpha: f64,
    /// `‖x' − x‖∞ / max(‖x‖∞, 1)` between the tolled equilibrium and the target.
    pub max_relative_deviation: f64,
    pub flows_match: bool,
    /// Largest `(max − min)/min` of generalized path cost over recorded paths.
    pub max_cost_spread: f64,
    pub worst_commodity: Option<usize>,
    pub costs_equalized: bool,
    pub tolled_relative_gap: f64,
    pub tolled_iterations: usize,
}

impl EnforcementReport {
    pub fn passed(&self) -> bool {
        self.flows_match && self.costs_equalized
    }
}

pub fn max_relative_deviation(x: &[f64], target: &[f64]) -> f64 {
    let diff = x.iter().zip(target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let norm = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / norm.max(1.0)
}

/// Re-solves the user equilibrium under `tolls` and compares it with `fs`.
pub fn verify_enforcement(
    net: &Network,
    fs: &FlowState,
    tolls: &TollVector,
    cfg: &SolverConfig,
) -> Result<EnforcementReport, PricingError> {
    let v = net.commodities().first().map_or(1.0, |c| c.value_of_time);
    if net.commodities().iter().any(|c| c.value_of_time != v) {
        return Err(PricingError::Heterogeneous);
    }
    let per_time: Vec<f64> = tolls.tolls.iter().map(|t| t / v).collect();
    let tolled = solve_tolled(net, 0.0, &per_time, cfg)?;
    let deviation = max_relative_deviation(&tolled.edge_flow, &fs.edge_flow);

    let spreads: Vec<f64> = fs
        .recorded_paths
        .par_iter()
        .map(|paths| {
            let costs = paths.iter().map(|p| {
                v * fs.path_travel_time(net, &p.edges)
                    + p.edges.iter().map(|&e| tolls.tolls[e]).sum::<f64>()
            });
            let (lo, hi) = costs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c), hi.max(c))
            });
            if lo > 0.0 && lo.is_finite() {
                (hi - lo) / lo
            } else {
                0.0
            }
        })
        .collect();
    let (worst, spread) = spreads
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or((None, 0.0), |(k, s)| (Some(k), s));
    Ok(EnforcementReport {
        alpha: fs.alpha,
        max_relative_deviation: deviation,
        flows_match: deviation <= FLOW_MATCH_TOLERANCE,
        max_cost_spread: spread,
        worst_commodity: worst,
        costs_equalized: spread <= COST_SPREAD_TOLERANCE,
        tolled_relative_gap: tolled.relative_gap,
        tolled_iterations: tolled.iterations,
    })
}

/// A share of one commodity's demand with its own value of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandClass {
    pub commodity: usize,
    pub value_of_time: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ClassEntry {
    Tuple(usize, f64, f64),
    Object { commodity: usize, value_of_time: f64, share: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub classes: Vec<DemandClass>,
}

impl ClassPartition {
    /// One class per commodity with the commodity's own value of time.
    pub fn homogeneous(net: &Network) -> Self {
        let classes = net
            .commodities()
            .iter()
            .enumerate()
            .map(|(k, c)| DemandClass { commodity: k, value_of_time: c.value_of_time, demand: c.demand })
            .collect();
        Self { classes }
    }

    /// Splits demands by `(commodity, value_of_time, share)` triples; commodity
    /// ids are 0-based here. Unlisted commodities keep a single class.
    pub fn from_shares(net: &Network, entries: &[(usize, f64, f64)]) -> Result<Self, PricingError> {
        let nk = net.num_commodities();
        let mut listed = vec![Vec::new(); nk];
        for &(k, v, share) in entries {
            if k >= nk {
                return Err(PricingError::Classes(format!("unknown commodity {}", k + 1)));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(PricingError::Classes(format!("value of time {v} must be positive")));
            }
            if !(share > 0.0 && share <= 1.0) {
                return Err(PricingError::Classes(format!("share {share} must be in (0, 1]")));
            }
            listed[k].push((v, share));
        }
        let mut classes = Vec::new();
        for (k, shares) in listed.iter().enumerate() {
            let c = net.commodity(k);
            if shares.is_empty() {
                classes.push(DemandClass { commodity: k, value_of_time: c.value_of_time, demand: c.demand });
                continue;
            }
            let total: f64 = shares.iter().map(|s| s.1).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(PricingError::Classes(format!(
                    "shares of commodity {} sum to {total}",
                    k + 1
                )));
            }
            classes.extend(shares.iter().map(|&(v, s)| DemandClass {
                commodity: k,
                value_of_time: v,
                demand: s * c.demand,
            }));
        }
        Ok(Self { classes })
    }

    /// JSON list of `[commodity, value_of_time, share]` triples or objects
    /// with those keys; commodity ids are 1-based.
    pub fn from_json(net: &Network, text: &str) -> Result<Self, PricingError> {
        let entries: Vec<ClassEntry> =
            serde_json::from_str(text).map_err(|e| PricingError::Classes(e.to_string()))?;
        let triples = entries
            .into_iter()
            .map(|e| match e {
                ClassEntry::Tuple(k, v, s) | ClassEntry::Object { commodity: k, value_of_time: v, share: s } => {
                    if k == 0 {
                        Err(PricingError::Classes("commodity ids are 1-based".into()))
                    } else {
                        Ok((k - 1, v, s))
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_shares(net, &triples)
    }
}

/// One LP column: a path used by one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpPath {
    pub class: usize,
    pub edges: Vec<usize>,
    pub travel_time: f64,
    /// False for columns added by pricing out unrecorded paths.
    pub recorded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    /// Rounds of adding shortest paths that undercut a class dual; 0 keeps
    /// the LP restricted to the recorded paths.
    pub column_generation_rounds: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { column_generation_rounds: 50 }
    }
}

/// Path LP with edge capacities `x_e`, solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedLP {
    pub alpha: f64,
    pub classes: Vec<DemandClass>,
    pub paths: Vec<LpPath>,
    /// Edge capacities, i.e. the flow being enforced.
    pub capacity: Vec<f64>,
    /// Travel times `t_e(x_e)`.
    pub edge_time: Vec<f64>,
    pub primal: Vec<f64>,
    pub usage: Vec<f64>,
    /// Capacity duals, `≤ 0` up to round-off.
    pub capacity_duals: Vec<f64>,
    pub demand_duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub pivots: usize,
    pub generation_rounds: usize,
}

impl RestrictedLP {
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs() / self.objective.abs().max(1e-300)
    }

    pub fn generated_paths(&self) -> usize {
        self.paths.iter().filter(|p| !p.recorded).count()
    }
}

struct PathLpSolution {
    primal: Vec<f64>,
    capacity_duals: Vec<f64>,
    demand_duals: Vec<f64>,
    objective: f64,
    dual_objective: f64,
    pivots: usize,
}

/// Rows: one demand equality per class, then one capacity row per edge.
fn solve_path_lp(
    classes: &[DemandClass],
    paths: &[LpPath],
    capacity: &[f64],
) -> Result<PathLpSolution, PricingError> {
    let nc = classes.len();
    let m = capacity.len();
    let scale = classes
        .iter()
        .map(|c| c.demand)
        .chain(capacity.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut lp = LinearProgram::new(nc + m);
    for (c, class) in classes.iter().enumerate() {
        lp.rhs[c] = class.demand / scale;
    }
    for (e, &x) in capacity.iter().enumerate() {
        lp.rhs[nc + e] = x / scale;
        lp.kinds[nc + e] = RowKind::Le;
    }
    for p in paths {
        let mut entries = vec![(p.class, 1.0)];
        for &e in &p.edges {
            match entries.iter_mut().find(|(r, _)| *r == nc + e) {
                Some(entry) => entry.1 += 1.0,
                None => entries.push((nc + e, 1.0)),
            }
        }
        lp.add_column(classes[p.class].value_of_time * p.travel_time, entries);
    }
    let sol = lp.solve().map_err(|e| match e {
        LpError::Infeasible(r) => PricingError::Restriction(format!("phase-one residual {r:.3e}")),
        other => PricingError::Lp(other),
    })?;
    Ok(PathLpSolution {
        primal: sol.x.iter().map(|v| v * scale).collect(),
        capacity_duals: sol.duals[nc..].to_vec(),
        demand_duals: sol.duals[..nc].to_vec(),
        objective: sol.objective * scale,
        dual_objective: sol.dual_objective * scale,
        pivots: sol.pivots,
    })
}

/// Builds and solves the capacity-constrained path LP for `classes` over
/// the recorded paths, with default column generation.
pub fn heterogeneous_lp(
    net: &Network,
    fs: &FlowState,
    classes: &ClassPartition,
) -> Result<RestrictedLP, PricingError> {
    heterogeneous_lp_with(net, fs, classes, &LpOptions::default())
}

pub fn heterogeneous_lp_with(
    net: &Network,
    fs: &FlowState,
    classes: &ClassPartition,
    opts: &LpOptions,
) -> Result<RestrictedLP, PricingError> {
    let m = net.num_edges();
    let edge_time: Vec<f64> =
        net.edges().iter().zip(&fs.edge_flow).map(|(e, &x)| e.travel_time.eval(x)).collect();
    let mut paths: Vec<LpPath> = classes
        .classes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(c, class)| {
            fs.recorded_paths[class.commodity].iter().map(move |p| (c, p))
        })
        .map(|(c, p)| LpPath {
            class: c,
            edges: p.edges.clone(),
            travel_time: p.edges.iter().map(|&e| edge_time[e]).sum(),
            recorded: true,
        })
        .collect();
    let mut sol = solve_path_lp(&classes.classes, &paths, &fs.edge_flow)?;
    let mut pivots = sol.pivots;
    let mut rounds = 0;
    while rounds < opts.column_generation_rounds {
        let tolls: Vec<f64> = sol.capacity_duals.iter().map(|y| (-y).max(0.0)).collect();
        let candidates: Vec<LpPath> = classes
            .classes
            .par_iter()
            .enumerate()
            .filter_map(|(c, class)| {
                let k = net.commodity(class.commodity);
                let w: Vec<f64> = edge_time
                    .iter()
                    .zip(&tolls)
                    .map(|(t, tau)| class.value_of_time * t + tau)
                    .collect();
                let tree = shortest_path_tree(net, k.origin, &w);
                let mu = sol.demand_duals[c];
                let dist = tree.dist[k.destination];
                if dist >= mu - 1e-9 * mu.abs().max(1.0) {
                    return None;
                }
                let edges = tree.path_to(net, k.destination)?;
                let travel_time = edges.iter().map(|&e| edge_time[e]).sum();
                Some(LpPath { class: c, edges, travel_time, recorded: false })
            })
            .collect();
        let fresh: Vec<LpPath> = candidates
            .into_iter()
            .filter(|p| !paths.iter().any(|q| q.class == p.class && q.edges == p.edges))
            .collect();
        if fresh.is_empty() {
            break;
        }
        paths.extend(fresh);
        sol = solve_path_lp(&classes.classes, &paths, &fs.edge_flow)?;
        pivots += sol.pivots;
        rounds += 1;
    }
    let mut usage = vec![0.0; m];
    for (p, &d) in paths.iter().zip(&sol.primal) {
        for &e in &p.edges {
            usage[e] += d;
        }
    }
    Ok(RestrictedLP {
        alpha: fs.alpha,
        classes: classes.classes.clone(),
        paths,
        capacity: fs.edge_flow.clone(),
        edge_time,
        primal: sol.primal,
        usage,
        capacity_duals: sol.capacity_duals,
        demand_duals: sol.demand_duals,
        objective: sol.objective,
        dual_objective: sol.dual_objective,
        pivots,
        generation_rounds: rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub tight: bool,
    /// `x_e − usage_e` per edge.
    pub slacks: Vec<f64>,
    /// Largest `slack / (1 + x_e)`.
    pub max_scaled_slack: f64,
}

pub fn check_tightness(lp: &RestrictedLP) -> TightnessReport {
    let slacks: Vec<f64> = lp.capacity.iter().zip(&lp.usage).map(|(x, u)| x - u).collect();
    let max_scaled_slack = slacks
        .iter()
        .zip(&lp.capacity)
        .map(|(s, x)| s / (1.0 + x))
        .fold(0.0f64, f64::max);
    TightnessReport { tight: max_scaled_slack <= TIGHTNESS_TOLERANCE, slacks, max_scaled_slack }
}

/// `τ_e = −(capacity dual)`, clamped at zero.
pub fn dual_tolls(lp: &RestrictedLP) -> Result<TollVector, PricingError> {
    let report = check_tightness(lp);
    if !report.tight {
        return Err(PricingError::NotTight(report.max_scaled_slack));
    }
    let tolls = lp
        .capacity_duals
        .iter()
        .enumerate()
        .map(|(edge, &y)| {
            let t = -y;
            if t < NEGATIVE_DUAL_LIMIT {
                Err(PricingError::NegativeDual { edge, value: t })
            } else {
                Ok(t.max(0.0))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(TollVector { tolls, provenance: Provenance::LpDual, alpha: lp.alpha })
}

/// Certificates that a toll vector enforces the LP's path flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    /// Largest relative excess of a positive LP path over its class minimum.
    pub max_slackness_violation: f64,
    /// Smallest `(shortest − recorded minimum)/recorded minimum` over classes.
    pub min_unrecorded_slack: f64,
    pub slackness_ok: bool,
    pub unrecorded_ok: bool,
}

impl DualCertificate {
    pub fn passed(&self) -> bool {
        self.slackness_ok && self.unrecorded_ok
    }
}

pub fn verify_dual_tolls(net: &Network, lp: &RestrictedLP, tolls: &TollVector) -> DualCertificate {
    let nc = lp.classes.len();
    let generalized: Vec<f64> = lp
        .paths
        .iter()
        .map(|p| {
            lp.classes[p.class].value_of_time * p.travel_time
                + p.edges.iter().map(|&e| tolls.tolls[e]).sum::<f64>()
        })
        .collect();
    let mut min_cost = vec![f64::INFINITY; nc];
    for (p, &g) in lp.paths.iter().zip(&generalized) {
        min_cost[p.class] = min_cost[p.class].min(g);
    }
    let mut violation = 0.0f64;
    for ((p, &g), &d) in lp.paths.iter().zip(&generalized).zip(&lp.primal) {
        let class = &lp.classes[p.class];
        if d > 1e-9 * class.demand {
            let lo = min_cost[p.class];
            violation = violation.max((g - lo) / lo.abs().max(1e-300));
        }
    }
    let slack = (0..nc)
        .into_par_iter()
        .map(|c| {
            let class = &lp.classes[c];
            let lo = min_cost[c];
            if !lo.is_finite() {
                return 0.0;
            }
            let k = net.commodity(class.commodity);
            let w: Vec<f64> = lp
                .edge_time
                .iter()
                .zip(&tolls.tolls)
                .map(|(t, tau)| class.value_of_time * t + tau)
                .collect();
            let tree = shortest_path_tree(net, k.origin, &w);
            (tree.dist[k.destination] - lo) / lo.abs().max(1e-300)
        })
        .reduce(|| f64::INFINITY, f64::min);
    DualCertificate {
        max_slackness_violation: violation,
        min_unrecorded_slack: slack,
        slackness_ok: violation <= SLACKNESS_TOLERANCE,
        unrecorded_ok: slack >= -SLACKNESS_TOLERANCE,
    }
}

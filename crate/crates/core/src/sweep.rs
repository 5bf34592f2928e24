//! Dense sampling of the interpolation parameter, β-fair selection, Pareto
//! frontiers, the UE/SO interpolation baseline and the theoretical bounds the
//! sampled curves are checked against.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve, AssignError, FlowState, RecordedPath, SolverConfig};
use crate::fairness::{all_metrics, FairnessError, FairnessOptions, FairnessSummary, Metric};
use crate::format::float;
use crate::network::Network;

/// Adjacent-sample jumps in `U` above this are reported as outliers.
pub const OUTLIER_JUMP: f64 = 0.1;
/// A record qualifies for a bound `β` if its unfairness is at most `β` plus this.
pub const SELECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("sweep has no record at {0}")]
    MissingEndpoint(f64),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("bad sweep CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Solve I-TAP at each sampled α.
    Itap,
    /// Interpolate the UE and SO solutions with weight γ.
    Isolution,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Itap => "itap",
            Method::Isolution => "isolution",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "itap" => Some(Method::Itap),
            "isolution" => Some(Method::Isolution),
            _ => None,
        }
    }
}

/// Metrics at one sampled parameter (α for I-TAP, γ for the baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub h_so: f64,
    pub h_ue: f64,
    /// `h_SO(x) / h_SO(x(1))`.
    pub ineff_ratio: f64,
    pub relative_gap: f64,
    pub u: f64,
    pub envy_free: f64,
    pub used_nash: f64,
    pub gini: f64,
}

impl SweepRecord {
    fn new(alpha: f64, fs: &FlowState, metrics: &FairnessSummary) -> Self {
        Self {
            alpha,
            h_so: fs.objectives.h_so,
            h_ue: fs.objectives.h_ue,
            ineff_ratio: f64::NAN,
            relative_gap: fs.relative_gap,
            u: metrics.u.aggregate,
            envy_free: metrics.envy_free.aggregate,
            used_nash: metrics.used_nash.aggregate,
            gini: metrics.gini.aggregate,
        }
    }

    pub fn unfairness(&self, metric: Metric) -> f64 {
        match metric {
            Metric::U => self.u,
            Metric::EnvyFree => self.envy_free,
            Metric::UsedNash => self.used_nash,
            Metric::Gini => self.gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub alpha: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub method: Method,
    /// Successful samples in ascending parameter order.
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
}

/// `{0, s, 2s, …} ∪ {1}`, always containing both endpoints exactly.
pub fn sample_grid(step: f64) -> Result<Vec<f64>, SweepError> {
    if !(step > 0.0 && step < 1.0) {
        return Err(SweepError::Parameter(format!("step must be in (0, 1), got {step}")));
    }
    let inv = 1.0 / step;
    let n = inv.round();
    let mut grid = Vec::new();
    if (inv - n).abs() < 1e-9 * inv {
        let n = n as usize;
        grid.extend((0..n).map(|i| i as f64 / n as f64));
    } else {
        let mut i = 0usize;
        loop {
            let a = i as f64 * step;
            if a >= 1.0 - 1e-12 {
                break;
            }
            grid.push(a);
            i += 1;
        }
    }
    grid.push(1.0);
    Ok(grid)
}

fn fill_ratios(records: &mut [SweepRecord]) {
    let so = records.iter().find(|r| r.alpha == 1.0).map(|r| r.h_so);
    for r in records.iter_mut() {
        r.ineff_ratio = match so {
            Some(s) if s > 0.0 => r.h_so / s,
            _ => f64::NAN,
        };
    }
}

fn collect(
    method: Method,
    outcomes: Vec<(f64, Result<SweepRecord, SweepError>)>,
) -> Sweep {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (alpha, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(SweepFailure { alpha, message: e.to_string() }),
        }
    }
    fill_ratios(&mut records);
    Sweep { method, records, failures }
}

/// Solves at `alpha` and evaluates every unfairness metric.
pub fn solve_and_measure(
    net: &Network,
    alpha: f64,
    cfg: &SolverConfig,
    opts: &FairnessOptions,
) -> Result<(FlowState, FairnessSummary), SweepError> {
    let fs = solve(net, alpha, cfg)?;
    let metrics = all_metrics(net, &fs, opts)?;
    Ok((fs, metrics))
}

/// One independent cold-start solve per sampled α.
pub fn dense_sweep(
    net: &Network,
    step: f64,
    cfg: &SolverConfig,
    opts: &FairnessOptions,
) -> Result<Sweep, SweepError> {
    cfg.validate()?;
    let grid = sample_grid(step)?;
    let outcomes = grid
        .par_iter()
        .map(|&alpha| {
            let rec = solve_and_measure(net, alpha, cfg, opts)
                .map(|(fs, m)| SweepRecord::new(alpha, &fs, &m));
            (alpha, rec)
        })
        .collect();
    Ok(collect(Method::Itap, outcomes))
}

/// Path-level convex combination `(1 − γ) ue + γ so` of two states.
pub fn interpolate_states(
    net: &Network,
    ue: &FlowState,
    so: &FlowState,
    gamma: f64,
) -> Result<FlowState, SweepError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(SweepError::Parameter(format!("gamma must be in [0, 1], got {gamma}")));
    }
    let paths = ue
        .recorded_paths
        .iter()
        .zip(&so.recorded_paths)
        .map(|(pu, ps)| {
            let mut index: HashMap<&[usize], usize> = HashMap::new();
            let mut merged: Vec<RecordedPath> = Vec::new();
            for (paths, w) in [(pu, 1.0 - gamma), (ps, gamma)] {
                for p in paths {
                    let flow = w * p.flow;
                    if flow <= 0.0 {
                        continue;
                    }
                    match index.get(p.edges.as_slice()) {
                        Some(&i) => merged[i].flow += flow,
                        None => {
                            index.insert(&p.edges, merged.len());
                            merged.push(RecordedPath { edges: p.edges.clone(), flow });
                        }
                    }
                }
            }
            merged
        })
        .collect();
    Ok(FlowState::from_paths(net, gamma, paths)?)
}

/// The I-Solution baseline: UE and SO solved once, then interpolated.
pub fn i_solution_sweep(
    net: &Network,
    step: f64,
    cfg: &SolverConfig,
    opts: &FairnessOptions,
) -> Result<Sweep, SweepError> {
    cfg.validate()?;
    let grid = sample_grid(step)?;
    let (ue, so) = rayon::join(|| solve(net, 0.0, cfg), || solve(net, 1.0, cfg));
    let (ue, so) = (ue?, so?);
    let outcomes = grid
        .par_iter()
        .map(|&gamma| {
            let rec = interpolate_states(net, &ue, &so, gamma).and_then(|fs| {
                let m = all_metrics(net, &fs, opts)?;
                Ok(SweepRecord::new(gamma, &fs, &m))
            });
            (gamma, rec)
        })
        .collect();
    Ok(collect(Method::Isolution, outcomes))
}

/// A selected point of a fairness-efficiency frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub beta: f64,
    pub method: Method,
    /// α for I-TAP, γ for the baseline.
    pub param: f64,
    pub ineff_ratio: f64,
    pub h_so: f64,
    pub unfairness: f64,
}

/// Among records with `metric ≤ β`, the one with least total travel time
/// (ties to the smaller parameter). The parameter-0 record always qualifies,
/// so with an approximate equilibrium the reported unfairness can exceed `β`.
pub fn select_beta_so(
    records: &[SweepRecord],
    beta: f64,
    method: Method,
    metric: Metric,
) -> Result<ParetoPoint, SweepError> {
    if beta.is_nan() || beta < metric.neutral() {
        return Err(SweepError::Parameter(format!("beta must be >= {}, got {beta}", metric.neutral())));
    }
    let best = records
        .iter()
        .filter(|r| r.alpha == 0.0 || r.unfairness(metric) <= beta + SELECTION_TOLERANCE)
        .min_by(|a, b| a.h_so.total_cmp(&b.h_so).then(a.alpha.total_cmp(&b.alpha)))
        .ok_or_else(|| SweepError::Undefined("no record qualifies (sweep lacks α = 0)".into()))?;
    Ok(ParetoPoint {
        beta,
        method,
        param: best.alpha,
        ineff_ratio: best.ineff_ratio,
        h_so: best.h_so,
        unfairness: best.unfairness(metric),
    })
}

/// `select_beta_so` for each β of an ascending grid.
pub fn pareto_frontier(
    records: &[SweepRecord],
    betas: &[f64],
    method: Method,
    metric: Metric,
) -> Result<Vec<ParetoPoint>, SweepError> {
    if betas.windows(2).any(|w| w[0] > w[1]) {
        return Err(SweepError::Parameter("beta grid must be ascending".into()));
    }
    betas.iter().map(|&b| select_beta_so(records, b, method, metric)).collect()
}

/// `{1.0, 1.05, …, 2.0}`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=20).map(|i| 1.0 + i as f64 / 20.0).collect()
}

/// Frontier comparison: count of β where I-TAP is less efficient than the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub compared: usize,
    pub violations: Vec<f64>,
}

pub fn dominance_report(
    itap: &[ParetoPoint],
    isolution: &[ParetoPoint],
    tolerance: f64,
) -> DominanceReport {
    let violations = itap
        .iter()
        .zip(isolution)
        .filter(|(a, b)| a.ineff_ratio > b.ineff_ratio + tolerance)
        .map(|(a, _)| a.beta)
        .collect();
    DominanceReport { compared: itap.len().min(isolution.len()), violations }
}

struct Endpoints {
    so_at_ue: f64,
    ue_at_ue: f64,
    so_at_so: f64,
    ue_at_so: f64,
}

fn endpoints(records: &[SweepRecord]) -> Result<Endpoints, SweepError> {
    let at = |a: f64| {
        records.iter().find(|r| r.alpha == a).ok_or(SweepError::MissingEndpoint(a))
    };
    let (ue, so) = (at(0.0)?, at(1.0)?);
    if !(so.h_so > 0.0) {
        return Err(SweepError::Undefined("system-optimum travel time is zero".into()));
    }
    Ok(Endpoints { so_at_ue: ue.h_so, ue_at_ue: ue.h_ue, so_at_so: so.h_so, ue_at_so: so.h_ue })
}

/// The two branches of the inefficiency bound at `alpha`: the price of
/// anarchy and `1 + (1 − α)/α · (h_UE(x(1)) − h_UE(x(0))) / h_SO(x(1))`.
pub fn ineff_bound_branches(records: &[SweepRecord], alpha: f64) -> Result<(f64, f64), SweepError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SweepError::Parameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let e = endpoints(records)?;
    let poa = e.so_at_ue / e.so_at_so;
    let second = 1.0 + (1.0 - alpha) / alpha * (e.ue_at_so - e.ue_at_ue) / e.so_at_so;
    Ok((poa, second))
}

/// Upper bound on `ρ(x(α))` for `α ∈ (0, 1)`.
pub fn ineff_bound(records: &[SweepRecord], alpha: f64) -> Result<f64, SweepError> {
    let (a, b) = ineff_bound_branches(records, alpha)?;
    Ok(a.min(b))
}

/// `α* = D / (h_SO(x(0)) + D)` with `D = h_UE(x(1)) − h_UE(x(0))`.
///
/// This is the root of `ρ̄ = (1 − α)/α · D / h_SO(x(1))`, i.e. the crossover
/// measured against the excess term of the second branch. The point where
/// the full branches meet is [`bound_branch_intersection`].
pub fn alpha_star_crossover(records: &[SweepRecord]) -> Result<f64, SweepError> {
    let e = endpoints(records)?;
    let d = e.ue_at_so - e.ue_at_ue;
    let den = e.so_at_ue + d;
    if !(e.so_at_ue > 0.0) || !(den > 0.0) {
        return Err(SweepError::Undefined("degenerate endpoint objectives".into()));
    }
    Ok(d / den)
}

/// `α` at which `1 + (1 − α)/α · D / h_SO(x(1))` equals the price of anarchy.
pub fn bound_branch_intersection(records: &[SweepRecord]) -> Result<f64, SweepError> {
    let e = endpoints(records)?;
    let d = e.ue_at_so - e.ue_at_ue;
    let den = d + e.so_at_ue - e.so_at_so;
    if !(den > 0.0) {
        return Err(SweepError::Undefined("degenerate endpoint objectives".into()));
    }
    Ok(d / den)
}

/// Largest `α` guaranteed to give `U ≤ β`: `min{1, (β − 1)/m}`.
pub fn feasible_alpha(net: &Network, beta: f64) -> f64 {
    let m = net.max_degree();
    if beta <= 1.0 {
        return 0.0;
    }
    if m == 0 {
        return 1.0;
    }
    ((beta - 1.0) / m as f64).min(1.0)
}

/// Parameters where `U` jumps by more than [`OUTLIER_JUMP`] from the previous sample.
pub fn unfairness_outliers(records: &[SweepRecord]) -> Vec<f64> {
    records
        .windows(2)
        .filter(|w| (w[1].u - w[0].u).abs() > OUTLIER_JUMP)
        .map(|w| w[1].alpha)
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "alpha,h_so,h_ue,ineff_ratio,gap,u,envy_free,used_nash,gini";
pub const PARETO_CSV_HEADER: &str = "beta,method,param,ineff_ratio,unfairness";

/// Sweep CSV; failed samples appear as rows of `nan`.
pub fn sweep_csv(sweep: &Sweep) -> String {
    let mut rows: Vec<(f64, String)> = sweep
        .records
        .iter()
        .map(|r| {
            let cells = [
                r.alpha, r.h_so, r.h_ue, r.ineff_ratio, r.relative_gap, r.u, r.envy_free,
                r.used_nash, r.gini,
            ];
            (r.alpha, cells.iter().map(|&v| float(v)).collect::<Vec<_>>().join(","))
        })
        .collect();
    for f in &sweep.failures {
        rows.push((f.alpha, format!("{}{}", float(f.alpha), ",nan".repeat(8))));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for (_, row) in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRecord>, SweepError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_CSV_HEADER => {}
        _ => {
            return Err(SweepError::Csv { line: 1, message: format!("expected header {SWEEP_CSV_HEADER}") })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SweepError::Csv { line: i + 1, message: e.to_string() })?;
        if cells.len() != 9 {
            return Err(SweepError::Csv {
                line: i + 1,
                message: format!("expected 9 columns, found {}", cells.len()),
            });
        }
        if cells[1..].iter().any(|v| v.is_nan()) {
            continue;
        }
        records.push(SweepRecord {
            alpha: cells[0],
            h_so: cells[1],
            h_ue: cells[2],
            ineff_ratio: cells[3],
            relative_gap: cells[4],
            u: cells[5],
            envy_free: cells[6],
            used_nash: cells[7],
            gini: cells[8],
        });
    }
    Ok(records)
}

pub fn pareto_csv(points: &[ParetoPoint]) -> String {
    let mut out = String::from(PARETO_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            float(p.beta),
            p.method.name(),
            float(p.param),
            float(p.ineff_ratio),
            float(p.unfairness)
        );
    }
    out
}

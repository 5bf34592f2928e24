//! Ground truth for tests: the Pigou network solved from its optimality
//! condition, and brute-force grid search on small parallel networks.
//!
//! Nothing here calls the Frank-Wolfe solver or the closed-form objective
//! code, so agreement with them is evidence rather than tautology.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PigouSolution {
    pub alpha: f64,
    pub x1: f64,
    pub x2: f64,
    pub t1: f64,
    pub t2: f64,
    pub total_travel_time: f64,
    /// Largest travel-time ratio between used edges.
    pub unfairness: f64,
}

fn pigou_times(m: u32, epsilon: f64, x1: f64, x2: f64) -> (f64, f64) {
    (1.0 + epsilon * x1, x2.powi(m as i32))
}

fn used_ratio(x1: f64, x2: f64, t1: f64, t2: f64) -> f64 {
    if x1 > 0.0 && x2 > 0.0 {
        (t1 / t2).max(t2 / t1)
    } else {
        1.0
    }
}

fn pigou_check(m: u32, epsilon: f64, demand: f64) -> Result<(), OracleError> {
    if m < 1 {
        return Err(OracleError::Parameter(format!("m must be >= 1, got {m}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) || !(demand > 0.0 && demand.is_finite()) {
        return Err(OracleError::Parameter("need epsilon >= 0 and demand > 0".into()));
    }
    Ok(())
}

/// Solves `(1 + αm) x_2^m = 1 + (1 + α) ε x_1` with `x_1 + x_2 = d` by
/// bisection on `x_2`; an indifferent corner goes to edge 2.
pub fn pigou_solve(
    m: u32,
    epsilon: f64,
    demand: f64,
    alpha: f64,
) -> Result<PigouSolution, OracleError> {
    pigou_check(m, epsilon, demand)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(OracleError::Parameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let mf = m as f64;
    let residual = |x2: f64| {
        (1.0 + alpha * mf) * x2.powi(m as i32) - (1.0 + (1.0 + alpha) * epsilon * (demand - x2))
    };
    let x2 = if residual(demand) <= 0.0 {
        demand
    } else {
        let (mut lo, mut hi) = (0.0, demand);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = residual(mid);
            if r.abs() <= 1e-12 || mid <= lo || mid >= hi {
                lo = mid;
                hi = mid;
                break;
            }
            if r < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let x1 = demand - x2;
    let (t1, t2) = pigou_times(m, epsilon, x1, x2);
    Ok(PigouSolution {
        alpha,
        x1,
        x2,
        t1,
        t2,
        total_travel_time: x1 * t1 + x2 * t2,
        unfairness: used_ratio(x1, x2, t1, t2),
    })
}

/// Minimum-travel-time Pigou flow `[x_1, x_2]` whose used edges have travel
/// times within a factor `β`, found on a grid of `10^6` steps.
pub fn pigou_beta_so(m: u32, epsilon: f64, demand: f64, beta: f64) -> Result<[f64; 2], OracleError> {
    pigou_check(m, epsilon, demand)?;
    if !(beta >= 1.0) {
        return Err(OracleError::Parameter(format!("beta must be >= 1, got {beta}")));
    }
    const STEPS: usize = 1_000_000;
    let best = (0..=STEPS)
        .into_par_iter()
        .filter_map(|i| {
            let x2 = demand * i as f64 / STEPS as f64;
            let x1 = demand - x2;
            let (t1, t2) = pigou_times(m, epsilon, x1, x2);
            (used_ratio(x1, x2, t1, t2) <= beta).then_some((x1 * t1 + x2 * t2, i))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .expect("the all-on-one-edge corners are always feasible");
    let x2 = demand * best.1 as f64 / STEPS as f64;
    Ok([demand - x2, x2])
}

/// Horner evaluation of `Σ γ_i x^i`.
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Eight-point Gauss-Legendre nodes and weights on `[−1, 1]`; exact for
/// polynomials of degree up to 15.
const GAUSS_NODES: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn quadrature(coeffs: &[f64], x: f64) -> f64 {
    let half = 0.5 * x;
    GAUSS_NODES.iter().map(|&(s, w)| w * horner(coeffs, half * (1.0 + s))).sum::<f64>() * half
}

/// Brute-force minimizer of the interpolated objective over a grid on the
/// flow simplex of a single-commodity parallel network with at most three
/// edges. `resolution` is the grid step as a fraction of demand.
pub fn grid_search_optimum(
    net: &Network,
    alpha: f64,
    resolution: f64,
) -> Result<Vec<f64>, OracleError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(OracleError::Parameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(OracleError::Parameter(format!("resolution must be in (0, 1], got {resolution}")));
    }
    if net.num_commodities() != 1 {
        return Err(OracleError::Unsupported("need exactly one commodity".into()));
    }
    let k = net.commodity(0);
    let parallel = net.edges().iter().all(|e| e.tail == k.origin && e.head == k.destination);
    if !parallel || net.num_edges() == 0 || net.num_edges() > 3 {
        return Err(OracleError::Unsupported("need 1 to 3 parallel origin-destination edges".into()));
    }
    let n = (1.0 / resolution).round() as usize;
    let d = k.demand;
    let levels: Vec<f64> = (0..=n).map(|i| d * i as f64 / n as f64).collect();
    // Per-edge objective contribution at every grid level.
    let table: Vec<Vec<f64>> = net
        .edges()
        .iter()
        .map(|e| {
            let c = e.travel_time.coefficients();
            levels
                .iter()
                .map(|&x| alpha * x * horner(&c, x) + (1.0 - alpha) * quadrature(&c, x))
                .collect()
        })
        .collect();
    let split = match table.len() {
        1 => vec![n],
        2 => {
            let i = (0..=n)
                .min_by(|&a, &b| {
                    (table[0][a] + table[1][n - a]).total_cmp(&(table[0][b] + table[1][n - b]))
                })
                .unwrap();
            vec![i, n - i]
        }
        _ => {
            let (_, i, j) = (0..=n)
                .into_par_iter()
                .map(|i| {
                    (0..=n - i)
                        .map(|j| (table[0][i] + table[1][j] + table[2][n - i - j], i, j))
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .unwrap()
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            vec![i, j, n - i - j]
        }
    };
    Ok(split.into_iter().map(|i| levels[i]).collect())
}

//! Fairness-aware traffic assignment.
//!
//! Solves the interpolated traffic assignment problem, which blends the
//! user-equilibrium and system-optimum objectives with a parameter `α`,
//! measures the unfairness of the resulting flows, sweeps `α` to trace
//! fairness-efficiency frontiers and derives tolls that enforce a chosen flow.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod fairness;
pub mod format;
pub mod lp;
pub mod network;
pub mod oracle;
pub mod pricing;
pub mod shortest_path;
pub mod sweep;
pub mod tntp;

pub use assignment::{solve, AssignError, Direction, FlowState, SolverConfig};
pub use network::{build_pigou, Commodity, Edge, Network, NetworkError, TravelTimeFn};

//! Branch-and-bound MISOCP solver: outer-approximation cuts for the rotated
//! cone blocks over the dual-simplex LP core.

pub mod cuts;
pub mod lp;

pub use cuts::{separate_cone_cut, Cut};

use crate::model::{ConeBlock, ConeSide, ModelInstance};
use lp::{LpCore, LpStatus};

/// Solver configuration. Tolerances are strictly positive.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative optimality gap for accepting an incumbent as optimal.
    pub rel_gap_tol: f64,
    /// Largest tolerated cone violation for an incumbent.
    pub cone_feas_tol: f64,
    /// Integrality tolerance on binary columns.
    pub integer_tol: f64,
    pub max_nodes: Option<u64>,
    /// Cuts separated per node and round while binaries are fractional.
    pub max_cuts_per_node: usize,
    pub time_limit_s: Option<f64>,
    /// Single-worker fixed-order search; two runs produce identical results.
    pub deterministic: bool,
    /// Tangent cuts seeded per cone block before the root solve.
    pub seed_cuts_per_block: usize,
    /// Emit one log record per node into the result.
    pub keep_node_log: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_gap_tol: 1e-4,
            cone_feas_tol: 1e-6,
            integer_tol: 1e-6,
            max_nodes: None,
            max_cuts_per_node: 20,
            time_limit_s: None,
            deterministic: true,
            seed_cuts_per_block: 8,
            keep_node_log: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    GapLimit,
    NodeLimit,
    TimeLimit,
}

/// One branch-and-bound node: bound overrides on binary columns relative to
/// the instance bounds, plus bookkeeping.
#[derive(Debug, Clone)]
pub struct BBNode {
    pub overrides: Vec<(u32, f64, f64)>,
    pub parent_bound: f64,
    pub depth: u32,
    pub id: u64,
}

#[derive(Debug, Clone)]
pub struct NodeLog {
    pub node: u64,
    pub depth: u32,
    pub bound: f64,
    pub incumbent: Option<f64>,
    pub gap: f64,
    pub cuts: u64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    pub incumbent_objective: Option<f64>,
    pub best_bound: f64,
    pub rel_gap: f64,
    pub nodes: u64,
    pub cuts_added: u64,
    pub node_log: Vec<NodeLog>,
}

mod bb;
pub use bb::{evaluate_incumbent, select_branch_var, solve, solve_relaxation, IncumbentReport, SolveError};

pub(crate) fn cone_violation(block: &ConeBlock, point: &[f64]) -> f64 {
    let (a, b) = (side_value(&block.a, point), side_value(&block.b, point));
    let mut p2 = 0.0;
    for &c in &block.p {
        let v = point[c as usize];
        p2 += v * v;
    }
    // g = ||(2p, a-b)|| - (a+b); positive means violated
    let norm = (4.0 * p2 + (a - b) * (a - b)).sqrt();
    norm - (a + b)
}

pub(crate) fn side_value(side: &ConeSide, point: &[f64]) -> f64 {
    match *side {
        ConeSide::Col(c) => point[c as usize],
        ConeSide::Const(v) => v,
    }
}

pub(crate) fn build_lp(instance: &ModelInstance) -> LpCore {
    let mut lp = LpCore::new(
        instance.obj.clone(),
        instance.col_lb.clone(),
        instance.col_ub.clone(),
    );
    for row in &instance.rows {
        lp.add_row(row.lb, row.ub, &row.coeffs);
    }
    lp
}

pub(crate) fn lp_status_name(s: LpStatus) -> &'static str {
    match s {
        LpStatus::Optimal => "optimal",
        LpStatus::Infeasible => "infeasible",
        LpStatus::IterLimit => "iteration-limit",
    }
}

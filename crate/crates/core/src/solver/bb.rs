//! Best-first branch-and-bound with depth-first plunging, over the LP core
//! with lazily separated cone cuts.
//!
//! Independent blocks of the instance (detected from the row/cone sparsity
//! pattern) are solved as separate trees and their results summed; the
//! decomposition is exact because no row, cone or objective term couples
//! columns across blocks, and it keeps the joint search from multiplying
//! the per-block trees.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use super::cuts::{seed_cuts, separate_cone_cut};
use super::lp::{LpCore, LpError, LpStatus};
use super::{BBNode, NodeLog, SolveResult, SolveStatus, SolverOptions};
use crate::model::{ConeBlock, ConeSide, ModelInstance};
use crate::radiality::UnionFind;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("LP core failed: {0}")]
    Lp(#[from] LpError),
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("LP iteration limit reached; instance appears numerically stuck")]
    LpStuck,
}

/// Feasibility diagnostics of a candidate point.
#[derive(Debug, Clone)]
pub struct IncumbentReport {
    pub max_fractionality: f64,
    pub max_row_violation: f64,
    pub max_bound_violation: f64,
    /// Largest positive cone violation `||(2p, a-b)|| - (a+b)`.
    pub max_cone_violation: f64,
    /// Largest exactness slack `a b - sum p^2` over line cones whose switch
    /// is closed at the point; a large value means a physically slack cone,
    /// not an infeasibility.
    pub max_active_cone_slack: f64,
}

/// Audit a point against the instance: binary fractionality, linear row and
/// bound violations, cone violations, and the exactness slack on closed
/// lines.
pub fn evaluate_incumbent(
    point: &[f64],
    instance: &ModelInstance,
    _opts: &SolverOptions,
) -> IncumbentReport {
    let mut max_frac = 0.0f64;
    for c in instance.integer_columns() {
        let v = point[c as usize];
        max_frac = max_frac.max((v - v.round()).abs());
    }
    let mut max_row = 0.0f64;
    for row in &instance.rows {
        let act: f64 = row
            .coeffs
            .iter()
            .map(|&(c, v)| v * point[c as usize])
            .sum();
        if act < row.lb {
            max_row = max_row.max(row.lb - act);
        }
        if act > row.ub {
            max_row = max_row.max(act - row.ub);
        }
    }
    let mut max_bound = 0.0f64;
    for c in 0..instance.n_cols {
        let v = point[c];
        if v < instance.col_lb[c] {
            max_bound = max_bound.max(instance.col_lb[c] - v);
        }
        if v > instance.col_ub[c] {
            max_bound = max_bound.max(v - instance.col_ub[c]);
        }
    }
    let mut max_cone = 0.0f64;
    let mut max_slack = 0.0f64;
    for cone in &instance.cones {
        max_cone = max_cone.max(super::cone_violation(cone, point));
        if cone.kind == crate::model::ConeKind::LineFlow {
            let x = instance.vars.x(cone.mode, cone.element as usize);
            if point[x as usize] > 0.5 {
                let a = super::side_value(&cone.a, point);
                let b = super::side_value(&cone.b, point);
                let p2: f64 = cone
                    .p
                    .iter()
                    .map(|&c| point[c as usize] * point[c as usize])
                    .sum();
                max_slack = max_slack.max(a * b - p2);
            }
        }
    }
    IncumbentReport {
        max_fractionality: max_frac,
        max_row_violation: max_row,
        max_bound_violation: max_bound,
        max_cone_violation: max_cone,
        max_active_cone_slack: max_slack,
    }
}

/// Most-fractional branching rule: the integral column whose fractional
/// part is closest to one half; ties break toward the lowest column index.
pub fn select_branch_var(point: &[f64], instance: &ModelInstance, tol: f64) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for c in instance.integer_columns() {
        let v = point[c as usize];
        let frac = (v - v.round()).abs();
        if frac <= tol {
            continue;
        }
        let dist = (frac - 0.5).abs();
        match best {
            None => best = Some((dist, c)),
            Some((bd, _)) if dist < bd - 1e-15 => best = Some((dist, c)),
            _ => {}
        }
    }
    best.map(|(_, c)| c)
}

/// The LP relaxation value and point of the instance under a node's bound
/// overrides, with the configured seed cuts installed. Returns `None` for
/// an infeasible relaxation.
pub fn solve_relaxation(
    instance: &ModelInstance,
    node: &BBNode,
    opts: &SolverOptions,
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    let mut lp = super::build_lp(instance);
    for (id, cone) in instance.cones.iter().enumerate() {
        for cut in seed_cuts(cone, id, opts.seed_cuts_per_block) {
            lp.add_row(f64::NEG_INFINITY, cut.rhs, &cut.coeffs);
        }
    }
    for &(c, lo, hi) in &node.overrides {
        lp.set_col_bounds(c as usize, lo, hi);
    }
    match lp.solve()? {
        LpStatus::Optimal => {
            let point: Vec<f64> = (0..instance.n_cols).map(|c| lp.value(c)).collect();
            Ok(Some((lp.objective(), point)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::IterLimit => Err(SolveError::LpStuck),
    }
}

/// One independent block of the instance.
struct Block {
    /// Original column per block column.
    cols: Vec<u32>,
    obj: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    integer: Vec<bool>,
    rows: Vec<(f64, f64, Vec<(u32, f64)>)>,
    cones: Vec<ConeBlock>,
}

fn decompose(instance: &ModelInstance) -> Vec<Block> {
    let n = instance.n_cols;
    let mut uf = UnionFind::new(n);
    for row in &instance.rows {
        for pair in row.coeffs.windows(2) {
            uf.union(pair[0].0 as usize, pair[1].0 as usize);
        }
    }
    for cone in &instance.cones {
        let mut cols: Vec<u32> = cone.p.clone();
        for side in [&cone.a, &cone.b] {
            if let ConeSide::Col(c) = side {
                cols.push(*c);
            }
        }
        for pair in cols.windows(2) {
            uf.union(pair[0] as usize, pair[1] as usize);
        }
    }

    // group columns by root, blocks ordered by their smallest column
    let roots: Vec<usize> = (0..n).map(|c| uf.find(c)).collect();
    let mut block_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nblocks = 0usize;
    for c in 0..n {
        block_of_root.entry(roots[c]).or_insert_with(|| {
            let id = nblocks;
            nblocks += 1;
            id
        });
    }
    let mut blocks: Vec<Block> = (0..nblocks)
        .map(|_| Block {
            cols: Vec::new(),
            obj: Vec::new(),
            lb: Vec::new(),
            ub: Vec::new(),
            integer: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
        })
        .collect();
    let mut block_of_col: Vec<usize> = vec![0; n];
    let mut local_index: Vec<u32> = vec![0; n];
    for c in 0..n {
        let bidx = block_of_root[&roots[c]];
        block_of_col[c] = bidx;
        let blk = &mut blocks[bidx];
        local_index[c] = blk.cols.len() as u32;
        blk.cols.push(c as u32);
        blk.obj.push(instance.obj[c]);
        blk.lb.push(instance.col_lb[c]);
        blk.ub.push(instance.col_ub[c]);
        blk.integer.push(instance.is_integer[c]);
    }
    for row in &instance.rows {
        if row.coeffs.is_empty() {
            continue;
        }
        let bidx = block_of_col[row.coeffs[0].0 as usize];
        let coeffs: Vec<(u32, f64)> = row
            .coeffs
            .iter()
            .map(|&(c, v)| (local_index[c as usize], v))
            .collect();
        blocks[bidx].rows.push((row.lb, row.ub, coeffs));
    }
    for cone in &instance.cones {
        let bidx = block_of_col[cone.p[0] as usize];
        let mut remapped = cone.clone();
        for c in remapped.p.iter_mut() {
            *c = local_index[*c as usize];
        }
        for side in [&mut remapped.a, &mut remapped.b] {
            if let ConeSide::Col(c) = side {
                *c = local_index[*c as usize];
            }
        }
        blocks[bidx].cones.push(remapped);
    }
    blocks
}

struct OpenNode {
    bound: f64,
    seq: u64,
    depth: u32,
    overrides: Vec<(u32, f64, f64)>,
}

#[derive(PartialEq)]
struct HeapKey {
    bound: f64,
    seq: u64,
}

impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.seq.cmp(&other.seq))
    }
}

struct BlockOutcome {
    status: SolveStatus,
    incumbent: Option<Vec<f64>>,
    objective: Option<f64>,
    bound: f64,
    nodes: u64,
    cuts: u64,
}

enum NodeOutcome {
    Pruned,
    Infeasible,
    Incumbent(f64, Vec<f64>),
    Branch { bound: f64, col: u32, frac: f64 },
}

struct Searcher<'a> {
    block: &'a Block,
    opts: &'a SolverOptions,
    lp: LpCore,
    integer_cols: Vec<u32>,
    cuts_added: u64,
}

impl<'a> Searcher<'a> {
    fn apply_node_bounds(&mut self, overrides: &[(u32, f64, f64)]) {
        for i in 0..self.integer_cols.len() {
            let c = self.integer_cols[i] as usize;
            self.lp
                .set_col_bounds(c, self.block.lb[c], self.block.ub[c]);
        }
        for &(c, lo, hi) in overrides {
            self.lp.set_col_bounds(c as usize, lo, hi);
        }
    }

    /// Process one node: LP solve plus the cut loop. The cut budget applies
    /// while binaries are fractional; integral points are cut until every
    /// cone is satisfied, so an incumbent is only ever accepted
    /// cone-feasible.
    fn process(
        &mut self,
        overrides: &[(u32, f64, f64)],
        incumbent_obj: Option<f64>,
    ) -> Result<NodeOutcome, SolveError> {
        self.apply_node_bounds(overrides);
        let mut cuts_this_node = 0usize;
        loop {
            match self.lp.solve()? {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Ok(NodeOutcome::Infeasible),
                LpStatus::IterLimit => return Err(SolveError::LpStuck),
            }
            let obj = self.lp.objective();
            if let Some(inc) = incumbent_obj {
                if obj >= inc - 1e-9 {
                    return Ok(NodeOutcome::Pruned);
                }
            }
            let point: Vec<f64> = (0..self.block.obj.len())
                .map(|c| self.lp.value(c))
                .collect();
            let frac_col = self.most_fractional(&point);

            let budget_left = if frac_col.is_some() {
                self.opts.max_cuts_per_node.saturating_sub(cuts_this_node)
            } else {
                usize::MAX
            };
            let mut added = 0usize;
            if budget_left > 0 {
                for (id, cone) in self.block.cones.iter().enumerate() {
                    if added >= budget_left {
                        break;
                    }
                    if let Some(cut) =
                        separate_cone_cut(cone, id, &point, self.opts.cone_feas_tol)
                    {
                        self.lp.add_row(f64::NEG_INFINITY, cut.rhs, &cut.coeffs);
                        self.cuts_added += 1;
                        added += 1;
                    }
                }
                cuts_this_node += added;
            }
            if added > 0 {
                continue;
            }

            return Ok(match frac_col {
                None => NodeOutcome::Incumbent(obj, point),
                Some((col, frac)) => NodeOutcome::Branch {
                    bound: obj,
                    col,
                    frac,
                },
            });
        }
    }

    fn most_fractional(&self, point: &[f64]) -> Option<(u32, f64)> {
        let mut best: Option<(f64, u32, f64)> = None;
        for &c in &self.integer_cols {
            let v = point[c as usize];
            let frac = (v - v.round()).abs();
            if frac <= self.opts.integer_tol {
                continue;
            }
            let dist = (frac - 0.5).abs();
            match best {
                None => best = Some((dist, c, v)),
                Some((bd, _, _)) if dist < bd - 1e-15 => best = Some((dist, c, v)),
                _ => {}
            }
        }
        best.map(|(_, c, v)| (c, v))
    }
}

fn search_block(
    block: &Block,
    opts: &SolverOptions,
    node_counter: &mut u64,
    log: &mut Vec<NodeLog>,
    deadline: Option<Instant>,
    node_budget: Option<u64>,
    warm_incumbent: Option<(f64, Vec<f64>)>,
) -> Result<BlockOutcome, SolveError> {
    let ncols = block.obj.len();
    let mut lp = LpCore::new(block.obj.clone(), block.lb.clone(), block.ub.clone());
    for (rlb, rub, coeffs) in &block.rows {
        lp.add_row(*rlb, *rub, coeffs);
    }
    let mut seeded = 0u64;
    for (id, cone) in block.cones.iter().enumerate() {
        for cut in seed_cuts(cone, id, opts.seed_cuts_per_block) {
            lp.add_row(f64::NEG_INFINITY, cut.rhs, &cut.coeffs);
            seeded += 1;
        }
    }
    let integer_cols: Vec<u32> = (0..ncols as u32)
        .filter(|&c| block.integer[c as usize] && block.lb[c as usize] < block.ub[c as usize])
        .collect();

    let mut searcher = Searcher {
        block,
        opts,
        lp,
        integer_cols,
        cuts_added: seeded,
    };

    let mut incumbent: Option<(f64, Vec<f64>)> = warm_incumbent;
    let mut dive: Vec<OpenNode> = Vec::new();
    let mut pool: BinaryHeap<Reverse<HeapKey>> = BinaryHeap::new();
    let mut pool_nodes: BTreeMap<u64, OpenNode> = BTreeMap::new();
    let mut seq = 0u64;
    dive.push(OpenNode {
        bound: f64::NEG_INFINITY,
        seq,
        depth: 0,
        overrides: Vec::new(),
    });
    seq += 1;

    let mut nodes = 0u64;
    let status;

    loop {
        let open_bound = {
            let mut ob = f64::INFINITY;
            for nd in &dive {
                ob = ob.min(nd.bound);
            }
            if let Some(Reverse(key)) = pool.peek() {
                ob = ob.min(key.bound);
            }
            ob
        };
        let exhausted = dive.is_empty() && pool.is_empty();
        if let Some((inc_obj, _)) = &incumbent {
            if exhausted {
                status = SolveStatus::Optimal;
                break;
            }
            let bound = open_bound.min(*inc_obj);
            let gap = (inc_obj - bound) / inc_obj.abs().max(1.0);
            if gap <= opts.rel_gap_tol {
                status = if gap <= 1e-12 {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::GapLimit
                };
                break;
            }
        } else if exhausted {
            status = SolveStatus::Infeasible;
            break;
        }
        if let Some(budget) = node_budget {
            if nodes >= budget {
                status = if incumbent.is_some() || !exhausted {
                    SolveStatus::NodeLimit
                } else {
                    SolveStatus::Infeasible
                };
                break;
            }
        }
        if deadline.map(|d| Instant::now() >= d).unwrap_or(false) {
            status = SolveStatus::TimeLimit;
            break;
        }

        // next node: plunge depth-first until the first incumbent, then
        // switch to best-bound order
        let node = if incumbent.is_none() {
            match dive.pop() {
                Some(nd) => nd,
                None => {
                    let Reverse(key) = pool.pop().expect("guarded by exhaustion check");
                    pool_nodes.remove(&key.seq).expect("pool entry")
                }
            }
        } else {
            for nd in dive.drain(..) {
                pool.push(Reverse(HeapKey {
                    bound: nd.bound,
                    seq: nd.seq,
                }));
                pool_nodes.insert(nd.seq, nd);
            }
            let Reverse(key) = pool.pop().expect("guarded by exhaustion check");
            pool_nodes.remove(&key.seq).expect("pool entry")
        };

        if let Some((inc_obj, _)) = &incumbent {
            if node.bound >= inc_obj - 1e-9 {
                continue;
            }
        }

        nodes += 1;
        *node_counter += 1;
        let node_id = *node_counter;
        let inc_obj_now = incumbent.as_ref().map(|(o, _)| *o);
        let outcome = searcher.process(&node.overrides, inc_obj_now)?;

        match outcome {
            NodeOutcome::Pruned | NodeOutcome::Infeasible => {
                if opts.keep_node_log {
                    log.push(NodeLog {
                        node: node_id,
                        depth: node.depth,
                        bound: f64::INFINITY,
                        incumbent: inc_obj_now,
                        gap: f64::INFINITY,
                        cuts: searcher.cuts_added,
                    });
                }
            }
            NodeOutcome::Incumbent(obj, point) => {
                let better = incumbent
                    .as_ref()
                    .map(|(i, _)| obj < i - 1e-12)
                    .unwrap_or(true);
                if better {
                    incumbent = Some((obj, point));
                }
                if opts.keep_node_log {
                    let inc = incumbent.as_ref().map(|(o, _)| *o);
                    log.push(NodeLog {
                        node: node_id,
                        depth: node.depth,
                        bound: obj,
                        incumbent: inc,
                        gap: 0.0,
                        cuts: searcher.cuts_added,
                    });
                }
            }
            NodeOutcome::Branch { bound, col, frac } => {
                if opts.keep_node_log {
                    let gap = match inc_obj_now {
                        Some(i) => (i - bound.min(i)) / i.abs().max(1.0),
                        None => f64::INFINITY,
                    };
                    log.push(NodeLog {
                        node: node_id,
                        depth: node.depth,
                        bound,
                        incumbent: inc_obj_now,
                        gap,
                        cuts: searcher.cuts_added,
                    });
                }
                let (lo, hi) = (block.lb[col as usize], block.ub[col as usize]);
                let down = frac.floor();
                let up = frac.ceil();
                let mut mk = |fix_lo: f64, fix_hi: f64| {
                    let mut o = node.overrides.clone();
                    o.retain(|&(c, _, _)| c != col);
                    o.push((col, fix_lo.max(lo), fix_hi.min(hi)));
                    let nd = OpenNode {
                        bound,
                        seq,
                        depth: node.depth + 1,
                        overrides: o,
                    };
                    seq += 1;
                    nd
                };
                let child_up = mk(up, hi);
                let child_down = mk(lo, down);
                if incumbent.is_none() {
                    // nearest child on top of the dive stack
                    if frac - down >= 0.5 {
                        dive.push(child_down);
                        dive.push(child_up);
                    } else {
                        dive.push(child_up);
                        dive.push(child_down);
                    }
                } else {
                    for nd in [child_up, child_down] {
                        pool.push(Reverse(HeapKey {
                            bound: nd.bound,
                            seq: nd.seq,
                        }));
                        pool_nodes.insert(nd.seq, nd);
                    }
                }
            }
        }
    }

    let bound = {
        let mut ob = incumbent
            .as_ref()
            .map(|(o, _)| *o)
            .unwrap_or(f64::INFINITY);
        for nd in &dive {
            ob = ob.min(nd.bound);
        }
        if let Some(Reverse(key)) = pool.peek() {
            ob = ob.min(key.bound);
        }
        ob
    };

    Ok(BlockOutcome {
        status,
        objective: incumbent.as_ref().map(|(o, _)| *o),
        incumbent: incumbent.map(|(_, p)| p),
        bound,
        nodes,
        cuts: searcher.cuts_added,
    })
}

/// Solve the instance to proven optimality (within the relative gap) by
/// branch-and-bound with outer-approximation cone cuts.
pub fn solve(instance: &ModelInstance, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    solve_with_warm_start(instance, opts, None)
}

/// [`solve`] with an optional warm start: a feasible full-length point
/// whose objective primes the incumbent for pruning.
pub fn solve_with_warm_start(
    instance: &ModelInstance,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<SolveResult, SolveError> {
    instance
        .check_invariants()
        .map_err(SolveError::Malformed)?;
    let deadline = opts
        .time_limit_s
        .map(|s| Instant::now() + std::time::Duration::from_secs_f64(s));

    let blocks = decompose(instance);
    let mut node_counter = 0u64;
    let mut log = Vec::new();
    let mut outcomes = Vec::new();
    let node_budget = opts.max_nodes;
    let mut nodes_used = 0u64;
    for block in &blocks {
        let warm_block = warm.map(|w| {
            let point: Vec<f64> = block.cols.iter().map(|&c| w[c as usize]).collect();
            let obj: f64 = block.obj.iter().zip(&point).map(|(c, v)| c * v).sum();
            (obj, point)
        });
        let remaining_budget = node_budget.map(|b| b.saturating_sub(nodes_used));
        let outcome = search_block(
            block,
            opts,
            &mut node_counter,
            &mut log,
            deadline,
            remaining_budget,
            warm_block,
        )?;
        nodes_used += outcome.nodes;
        outcomes.push(outcome);
    }

    let mut status = SolveStatus::Optimal;
    for o in &outcomes {
        status = match (status, o.status) {
            (_, SolveStatus::Infeasible) | (SolveStatus::Infeasible, _) => SolveStatus::Infeasible,
            (SolveStatus::TimeLimit, _) | (_, SolveStatus::TimeLimit) => SolveStatus::TimeLimit,
            (SolveStatus::NodeLimit, _) | (_, SolveStatus::NodeLimit) => SolveStatus::NodeLimit,
            (SolveStatus::GapLimit, _) | (_, SolveStatus::GapLimit) => SolveStatus::GapLimit,
            (SolveStatus::Optimal, SolveStatus::Optimal) => SolveStatus::Optimal,
        };
    }
    let all_incumbent =
        !outcomes.is_empty() && outcomes.iter().all(|o| o.incumbent.is_some());
    let incumbent = if all_incumbent && status != SolveStatus::Infeasible {
        let mut full = vec![0.0; instance.n_cols];
        for (block, o) in blocks.iter().zip(&outcomes) {
            let point = o.incumbent.as_ref().unwrap();
            for (local, &orig) in block.cols.iter().enumerate() {
                full[orig as usize] = point[local];
            }
        }
        Some(full)
    } else {
        None
    };
    let incumbent_objective = if all_incumbent {
        Some(outcomes.iter().map(|o| o.objective.unwrap()).sum::<f64>())
    } else {
        None
    };
    let best_bound: f64 = outcomes.iter().map(|o| o.bound).sum();
    let rel_gap = match incumbent_objective {
        Some(inc) => ((inc - best_bound) / inc.abs().max(1.0)).max(0.0),
        None => f64::INFINITY,
    };
    let cuts_added = outcomes.iter().map(|o| o.cuts).sum();

    Ok(SolveResult {
        status,
        incumbent,
        incumbent_objective,
        best_bound,
        rel_gap,
        nodes: nodes_used,
        cuts_added,
        node_log: log,
    })
}

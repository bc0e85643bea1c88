//! Bounded-variable dual simplex over a sparse column store.
//!
//! The engine is built for the branch-and-bound / cutting-plane workload:
//! every restart is a bound change or an appended row, both of which keep
//! the current basis dual-feasible, so re-solves run the dual simplex from
//! wherever the previous solve finished. A fresh problem starts from the
//! all-logical basis with nonbasic columns placed on the bound matching
//! their cost sign, which is dual-feasible whenever columns are boxed.
//!
//! Anti-cycling: Bland's rule takes over after `10 * rows` pivots without
//! dual-objective progress.

mod lu;

pub use lu::BasisColumn;
use lu::Factorization;

const TOL_PRIMAL: f64 = 1e-9;
const TOL_DUAL: f64 = 1e-9;
const TOL_PIVOT: f64 = 1e-9;
/// Dual-feasibility slack admitted by the two-pass ratio test; cleaned up
/// by the exact dual recomputation at every refactorization.
const HARRIS_DELTA: f64 = 1e-7;
const ETA_REFACTOR_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("basis numerically singular near basis position {position}")]
    Singular { position: usize },
    #[error("column {col} needs a finite bound on the {side} side to start dual-feasible")]
    UnboundedColumn { col: usize, side: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(u32),
    AtLower,
    AtUpper,
}

struct Eta {
    pos: u32,
    /// Sparse B^-1 a_q by basis position, pivot entry included.
    col: Vec<(u32, f64)>,
    pivot: f64,
}

/// Incremental LP: `min obj . x` subject to row bounds `rlb <= Ax <= rub`
/// and column bounds. Rows are added through [`LpCore::add_row`]; columns
/// are fixed at construction.
pub struct LpCore {
    ncols: usize,
    nrows: usize,
    /// Structural columns: (row, coefficient), ascending row order.
    cols: Vec<Vec<(u32, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    obj: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<u32>,
    xval: Vec<f64>,
    dval: Vec<f64>,
    factor: Option<Factorization>,
    etas: Vec<Eta>,
    need_refactor: bool,
    need_x_recompute: bool,
    started: bool,
    // scratch buffers
    rho: Vec<f64>,
    alpha: Vec<f64>,
    work_rows: Vec<f64>,
    work_pos: Vec<f64>,
    scratch: Vec<f64>,
    resets: u32,
    pub pivots: u64,
    pub refactors: u64,
    pub lu_seconds: f64,
}

impl LpCore {
    /// Create a problem with `ncols` structural columns, no rows yet.
    pub fn new(obj: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        let ncols = obj.len();
        assert_eq!(lb.len(), ncols);
        assert_eq!(ub.len(), ncols);
        Self {
            ncols,
            nrows: 0,
            cols: vec![Vec::new(); ncols],
            lb,
            ub,
            obj,
            state: Vec::new(),
            basis: Vec::new(),
            xval: Vec::new(),
            dval: Vec::new(),
            factor: None,
            etas: Vec::new(),
            need_refactor: true,
            need_x_recompute: true,
            started: false,
            rho: Vec::new(),
            alpha: Vec::new(),
            work_rows: Vec::new(),
            work_pos: Vec::new(),
            scratch: Vec::new(),
            resets: 0,
            pivots: 0,
            refactors: 0,
            lu_seconds: 0.0,
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    fn nvars(&self) -> usize {
        self.ncols + self.nrows
    }

    /// Append a row `rlb <= sum coeffs <= rub`. Its logical variable enters
    /// the basis. Coefficients must reference structural columns.
    pub fn add_row(&mut self, rlb: f64, rub: f64, coeffs: &[(u32, f64)]) {
        debug_assert!(rlb <= rub);
        let r = self.nrows as u32;
        let mut activity = 0.0;
        for &(c, v) in coeffs {
            debug_assert!((c as usize) < self.ncols);
            self.cols[c as usize].push((r, v));
            if self.started {
                activity += v * self.xval[c as usize];
            }
        }
        self.nrows += 1;
        self.lb.push(rlb);
        self.ub.push(rub);
        self.obj.push(0.0);
        let logical = self.ncols + r as usize;
        if self.started {
            self.state.push(VarState::Basic(r));
            self.basis.push(logical as u32);
            self.xval.push(activity);
            self.dval.push(0.0);
        }
        self.need_refactor = true;
    }

    /// Update the bounds of a structural column.
    pub fn set_col_bounds(&mut self, col: usize, lb: f64, ub: f64) {
        debug_assert!(col < self.ncols);
        debug_assert!(lb <= ub);
        self.lb[col] = lb;
        self.ub[col] = ub;
        if self.started {
            match self.state[col] {
                VarState::Basic(_) => {}
                VarState::AtLower => {
                    if lb.is_finite() {
                        if self.xval[col] != lb {
                            self.xval[col] = lb;
                            self.need_x_recompute = true;
                        }
                    } else if ub.is_finite() {
                        self.state[col] = VarState::AtUpper;
                        self.xval[col] = ub;
                        self.need_x_recompute = true;
                    }
                }
                VarState::AtUpper => {
                    if ub.is_finite() {
                        if self.xval[col] != ub {
                            self.xval[col] = ub;
                            self.need_x_recompute = true;
                        }
                    } else if lb.is_finite() {
                        self.state[col] = VarState::AtLower;
                        self.xval[col] = lb;
                        self.need_x_recompute = true;
                    }
                }
            }
        }
    }

    pub fn col_bounds(&self, col: usize) -> (f64, f64) {
        (self.lb[col], self.ub[col])
    }

    /// Value of a structural column (or, for `col >= ncols`, the activity of
    /// row `col - ncols`) at the current point.
    pub fn value(&self, col: usize) -> f64 {
        self.xval[col]
    }

    pub fn objective(&self) -> f64 {
        (0..self.nvars())
            .map(|v| self.obj[v] * self.xval[v])
            .sum()
    }

    fn col_entries(&self, v: usize) -> ColRef<'_> {
        if v < self.ncols {
            ColRef::Structural(&self.cols[v])
        } else {
            ColRef::Logical((v - self.ncols) as u32)
        }
    }

    fn fresh_start(&mut self) -> Result<(), LpError> {
        let n = self.nvars();
        self.state = vec![VarState::AtLower; n];
        self.basis = (0..self.nrows)
            .map(|r| (self.ncols + r) as u32)
            .collect();
        self.xval = vec![0.0; n];
        self.dval = vec![0.0; n];
        for r in 0..self.nrows {
            self.state[self.ncols + r] = VarState::Basic(r as u32);
        }
        // place nonbasic columns dual-feasibly: cost >= 0 at lower else upper
        for v in 0..self.ncols {
            let (lo, hi) = (self.lb[v], self.ub[v]);
            let c = self.obj[v];
            let side = if c >= 0.0 {
                if lo.is_finite() {
                    VarState::AtLower
                } else if c.abs() <= TOL_DUAL && hi.is_finite() {
                    VarState::AtUpper
                } else if !lo.is_finite() && !hi.is_finite() && c.abs() <= TOL_DUAL {
                    VarState::AtLower // free with zero cost parks at 0
                } else {
                    return Err(LpError::UnboundedColumn { col: v, side: "lower" });
                }
            } else if hi.is_finite() {
                VarState::AtUpper
            } else {
                return Err(LpError::UnboundedColumn { col: v, side: "upper" });
            };
            self.state[v] = side;
            self.xval[v] = match side {
                VarState::AtLower => {
                    if lo.is_finite() {
                        lo
                    } else {
                        0.0
                    }
                }
                VarState::AtUpper => hi,
                VarState::Basic(_) => unreachable!(),
            };
        }
        self.started = true;
        self.need_refactor = true;
        self.need_x_recompute = true;
        Ok(())
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let t0 = std::time::Instant::now();
        self.refactors += 1;
        let cols: Vec<BasisColumn> = self
            .basis
            .iter()
            .map(|&v| match self.col_entries(v as usize) {
                ColRef::Structural(entries) => BasisColumn {
                    entries: entries.clone(),
                },
                ColRef::Logical(r) => BasisColumn {
                    entries: vec![(r, -1.0)],
                },
            })
            .collect();
        let out = match Factorization::factor(self.nrows, &cols) {
            Ok(f) => {
                self.factor = Some(f);
                self.etas.clear();
                self.need_refactor = false;
                Ok(())
            }
            Err(e) => Err(LpError::Singular {
                position: e.position,
            }),
        };
        self.lu_seconds += t0.elapsed().as_secs_f64();
        out
    }

    /// Refactorize; if the saved basis has gone numerically singular,
    /// restart from the all-logical basis (which always factors) and let
    /// the dual simplex rebuild feasibility from there.
    fn refactor_recover(&mut self) -> Result<(), LpError> {
        if self.refactor().is_ok() {
            return Ok(());
        }
        self.resets += 1;
        if self.resets > 3 {
            return self.refactor();
        }
        self.fresh_start()?;
        self.refactor()
    }

    /// Solve B y = v where `v` is dense by original row; result by basis
    /// position (written into `out`).
    fn ftran(&mut self, v: &mut Vec<f64>) {
        let f = self.factor.as_ref().expect("factorized");
        v.resize(self.nrows, 0.0);
        f.ftran_dense(v, &mut self.scratch);
        for eta in &self.etas {
            let p = eta.pos as usize;
            let t = v[p] / eta.pivot;
            if t != 0.0 {
                for &(i, ev) in &eta.col {
                    if i != eta.pos {
                        v[i as usize] -= ev * t;
                    }
                }
            }
            v[p] = t;
        }
    }

    /// Solve B^T y = v where `v` is dense by basis position; result by
    /// original row (written into `out`).
    fn btran(&mut self, v: &mut Vec<f64>) {
        v.resize(self.nrows, 0.0);
        for eta in self.etas.iter().rev() {
            let p = eta.pos as usize;
            let mut acc = v[p];
            for &(i, ev) in &eta.col {
                if i != eta.pos {
                    acc -= ev * v[i as usize];
                }
            }
            v[p] = acc / eta.pivot;
        }
        let f = self.factor.as_ref().expect("factorized");
        f.btran_dense(v, &mut self.scratch);
    }

    fn recompute_basics(&mut self) {
        let mut rhs = std::mem::take(&mut self.work_rows);
        rhs.clear();
        rhs.resize(self.nrows, 0.0);
        for v in 0..self.nvars() {
            if matches!(self.state[v], VarState::Basic(_)) {
                continue;
            }
            let xv = self.xval[v];
            if xv == 0.0 {
                continue;
            }
            match self.col_entries(v) {
                ColRef::Structural(entries) => {
                    for &(r, a) in entries {
                        rhs[r as usize] -= a * xv;
                    }
                }
                ColRef::Logical(r) => {
                    rhs[r as usize] += xv;
                }
            }
        }
        self.ftran(&mut rhs);
        for p in 0..self.nrows {
            self.xval[self.basis[p] as usize] = rhs[p];
        }
        self.work_rows = rhs;
        self.need_x_recompute = false;
    }

    fn recompute_duals(&mut self) {
        self.work_pos.clear();
        self.work_pos.resize(self.nrows, 0.0);
        for p in 0..self.nrows {
            self.work_pos[p] = self.obj[self.basis[p] as usize];
        }
        let mut y = std::mem::take(&mut self.work_pos);
        self.btran(&mut y);
        for v in 0..self.nvars() {
            if matches!(self.state[v], VarState::Basic(_)) {
                self.dval[v] = 0.0;
                continue;
            }
            let mut d = self.obj[v];
            match self.col_entries(v) {
                ColRef::Structural(entries) => {
                    for &(r, a) in entries {
                        d -= a * y[r as usize];
                    }
                }
                ColRef::Logical(r) => {
                    d += y[r as usize];
                }
            }
            self.dval[v] = d;
        }
        self.work_pos = y;
    }

    /// Dual simplex to optimality (or infeasibility proof).
    pub fn solve(&mut self) -> Result<LpStatus, LpError> {
        if !self.started {
            self.fresh_start()?;
        }
        self.resets = 0;
        if self.need_refactor {
            self.refactor_recover()?;
            self.recompute_basics();
            self.recompute_duals();
        } else if self.need_x_recompute {
            self.recompute_basics();
        }

        let trace = std::env::var("RESILFLOW_LP_TRACE").is_ok();
        let max_iter = 400 * self.nrows as u64 + 50_000;
        let stall_limit = 10 * self.nrows as u64;
        let mut stall = 0u64;
        let mut bland = false;
        let mut iter = 0u64;

        loop {
            iter += 1;
            if iter > max_iter {
                return Ok(LpStatus::IterLimit);
            }
            if trace && iter % 500 == 0 {
                let viol = self.max_primal_violation();
                eprintln!(
                    "  lp iter {iter}: obj {:.6} maxviol {viol:.3e} etas {} stall {stall} refac {} lu {:.2}s",
                    self.objective(),
                    self.etas.len(),
                    self.refactors,
                    self.lu_seconds,
                );
            }
            if self.etas.len() >= ETA_REFACTOR_LIMIT {
                self.refactor_recover()?;
                self.recompute_basics();
                self.recompute_duals();
            }

            // leaving variable: largest primal bound violation
            let mut p_best: Option<usize> = None;
            let mut viol_best = TOL_PRIMAL;
            for p in 0..self.nrows {
                let v = self.basis[p] as usize;
                let x = self.xval[v];
                let viol = if x < self.lb[v] - TOL_PRIMAL {
                    self.lb[v] - x
                } else if x > self.ub[v] + TOL_PRIMAL {
                    x - self.ub[v]
                } else {
                    continue;
                };
                if bland {
                    // smallest variable index rule
                    if p_best.is_none_or(|q| self.basis[p] < self.basis[q]) {
                        p_best = Some(p);
                    }
                } else if viol > viol_best {
                    viol_best = viol;
                    p_best = Some(p);
                }
            }
            let Some(p) = p_best else {
                return Ok(LpStatus::Optimal);
            };

            let leave_var = self.basis[p] as usize;
            let x_p = self.xval[leave_var];
            let below = x_p < self.lb[leave_var];
            // sgn as in: d_j' = d_j - theta * sgn * alpha_j
            let sgn = if below { -1.0 } else { 1.0 };
            let target = if below {
                self.lb[leave_var]
            } else {
                self.ub[leave_var]
            };

            // row p of B^-1
            self.rho.clear();
            self.rho.resize(self.nrows, 0.0);
            self.rho[p] = 1.0;
            let mut rho = std::mem::take(&mut self.rho);
            self.btran(&mut rho);

            // pricing: alpha_j = rho . a_j for every nonbasic j (fixed
            // columns stay priced so their reduced costs remain exact for
            // later bound relaxations, they just never become candidates)
            self.alpha.clear();
            self.alpha.resize(self.nvars(), 0.0);
            let mut candidates: Vec<(f64, f64, u32)> = Vec::new();
            for v in 0..self.nvars() {
                let st = self.state[v];
                if matches!(st, VarState::Basic(_)) {
                    continue;
                }
                let a = match self.col_entries(v) {
                    ColRef::Structural(entries) => {
                        let mut acc = 0.0;
                        for &(r, av) in entries {
                            acc += av * rho[r as usize];
                        }
                        acc
                    }
                    ColRef::Logical(r) => -rho[r as usize],
                };
                if a == 0.0 {
                    continue;
                }
                self.alpha[v] = a;
                if self.lb[v] == self.ub[v] {
                    continue;
                }
                let sa = sgn * a;
                let (eligible, dfeas) = match st {
                    VarState::AtLower => (sa > TOL_PIVOT, self.dval[v]),
                    VarState::AtUpper => (sa < -TOL_PIVOT, -self.dval[v]),
                    VarState::Basic(_) => unreachable!(),
                };
                if eligible {
                    // strict breakpoint and the delta-relaxed cap of the
                    // two-pass (Harris) ratio test
                    let e = sa.abs();
                    let strict = (dfeas / e).max(0.0);
                    let relaxed = (dfeas + HARRIS_DELTA) / e;
                    candidates.push((strict, relaxed, v as u32));
                }
            }

            if candidates.is_empty() {
                self.rho = rho;
                return Ok(LpStatus::Infeasible);
            }

            candidates
                .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.2.cmp(&b.2)));

            // bound-flip ratio test with two-pass stabilization: pass one
            // finds the largest dual step that keeps every reduced cost
            // within HARRIS_DELTA of feasibility; pass two flips boxed
            // breakpoints that cannot absorb the violation and pivots on the
            // largest-magnitude entry inside the admissible window
            let mut remaining = viol_of(x_p, self.lb[leave_var], self.ub[leave_var]);
            let mut flips: Vec<u32> = Vec::new();
            let mut start = 0usize;
            let mut chosen: Option<usize> = None;
            if bland {
                // Bland: smallest variable index among the minimal-ratio
                // breakpoints, no flips
                let rmin = candidates[0].0;
                let q = candidates
                    .iter()
                    .filter(|c| c.0 <= rmin + 1e-12)
                    .map(|c| c.2)
                    .min()
                    .unwrap();
                chosen = Some(q as usize);
            }
            while chosen.is_none() {
                if start >= candidates.len() {
                    // every breakpoint flipped and the violation persists
                    self.rho = rho;
                    return Ok(LpStatus::Infeasible);
                }
                let mut theta_max = f64::INFINITY;
                for &(_, relaxed, _) in &candidates[start..] {
                    theta_max = theta_max.min(relaxed);
                }
                let mut end = start;
                while end < candidates.len() && candidates[end].0 <= theta_max {
                    end += 1;
                }
                end = end.max(start + 1);
                let mut k = start;
                while k < end {
                    let vv = candidates[k].2 as usize;
                    let cap = self.alpha[vv].abs() * (self.ub[vv] - self.lb[vv]);
                    let boxed = self.lb[vv].is_finite() && self.ub[vv].is_finite();
                    if boxed && cap < remaining {
                        flips.push(candidates[k].2);
                        remaining -= cap;
                        k += 1;
                    } else {
                        break;
                    }
                }
                if k == end {
                    start = end;
                    continue;
                }
                // pivot on the largest |alpha| in the admissible window
                let mut best = candidates[k].2 as usize;
                let mut best_mag = self.alpha[best].abs();
                for &(_, _, v) in &candidates[k + 1..end] {
                    let mag = self.alpha[v as usize].abs();
                    if mag > best_mag {
                        best_mag = mag;
                        best = v as usize;
                    }
                }
                chosen = Some(best);
            }
            let q = chosen.unwrap();

            // apply flips
            if !flips.is_empty() {
                let mut fr = std::mem::take(&mut self.work_rows);
                fr.clear();
                fr.resize(self.nrows, 0.0);
                for &fv in &flips {
                    let fv = fv as usize;
                    let (old, new) = match self.state[fv] {
                        VarState::AtLower => {
                            self.state[fv] = VarState::AtUpper;
                            (self.lb[fv], self.ub[fv])
                        }
                        VarState::AtUpper => {
                            self.state[fv] = VarState::AtLower;
                            (self.ub[fv], self.lb[fv])
                        }
                        VarState::Basic(_) => unreachable!(),
                    };
                    let delta = new - old;
                    self.xval[fv] = new;
                    match self.col_entries(fv) {
                        ColRef::Structural(entries) => {
                            for &(r, av) in entries {
                                fr[r as usize] += av * delta;
                            }
                        }
                        ColRef::Logical(r) => {
                            fr[r as usize] -= delta;
                        }
                    }
                }
                self.ftran(&mut fr);
                for i in 0..self.nrows {
                    if fr[i] != 0.0 {
                        let b = self.basis[i] as usize;
                        self.xval[b] -= fr[i];
                    }
                }
                self.work_rows = fr;
            }

            // entering column through the basis
            let mut w = std::mem::take(&mut self.work_rows);
            w.clear();
            w.resize(self.nrows, 0.0);
            match self.col_entries(q) {
                ColRef::Structural(entries) => {
                    for &(r, av) in entries {
                        w[r as usize] = av;
                    }
                }
                ColRef::Logical(r) => {
                    w[r as usize] = -1.0;
                }
            }
            self.ftran(&mut w);

            let alpha_q = self.alpha[q];
            if (w[p] - alpha_q).abs() > 1e-6 * alpha_q.abs().max(1.0) {
                // row and column views of the pivot disagree
                if !self.etas.is_empty() {
                    // stale factors: rebuild once and redo the iteration
                    self.work_rows = w;
                    self.rho = rho;
                    self.refactor_recover()?;
                    self.recompute_basics();
                    self.recompute_duals();
                    continue;
                }
                // the factorization is already fresh: the column (ftran)
                // view is the authoritative one; if even that is unusable
                // the basis has degenerated, so restart from logicals
                if w[p].abs() < 1e-9 {
                    self.work_rows = w;
                    self.rho = rho;
                    self.resets += 1;
                    if self.resets > 3 {
                        return Err(LpError::Singular { position: p });
                    }
                    self.fresh_start()?;
                    self.refactor()?;
                    self.recompute_basics();
                    self.recompute_duals();
                    continue;
                }
            }
            let alpha_q = w[p];

            // primal step
            let x_p_now = self.xval[leave_var];
            let delta_p = target - x_p_now;
            let dx_q = -delta_p / w[p];
            for i in 0..self.nrows {
                if w[i] != 0.0 {
                    let b = self.basis[i] as usize;
                    self.xval[b] -= w[i] * dx_q;
                }
            }
            self.xval[q] += dx_q;
            self.xval[leave_var] = target;

            // dual step
            let theta = (self.dval[q] / (sgn * alpha_q)).max(0.0);
            if theta > TOL_DUAL {
                stall = 0;
            } else {
                stall += 1;
                if stall > stall_limit && !bland {
                    bland = true;
                }
            }
            if theta != 0.0 {
                for v in 0..self.nvars() {
                    let a = self.alpha[v];
                    if a != 0.0 && !matches!(self.state[v], VarState::Basic(_)) {
                        self.dval[v] -= theta * sgn * a;
                    }
                }
            }
            self.dval[leave_var] = -theta * sgn;
            self.dval[q] = 0.0;

            // basis exchange
            self.state[q] = VarState::Basic(p as u32);
            self.state[leave_var] = if below {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.basis[p] = q as u32;
            let eta_col: Vec<(u32, f64)> = w
                .iter()
                .enumerate()
                .filter(|(_, &v)| v.abs() > 1e-13)
                .map(|(i, &v)| (i as u32, v))
                .collect();
            self.etas.push(Eta {
                pos: p as u32,
                pivot: w[p],
                col: eta_col,
            });
            self.pivots += 1;

            self.work_rows = w;
            self.rho = rho;
        }
    }

    /// Largest bound violation over basic variables (diagnostic).
    pub fn max_primal_violation(&self) -> f64 {
        (0..self.nrows)
            .map(|p| {
                let v = self.basis[p] as usize;
                viol_of(self.xval[v], self.lb[v], self.ub[v])
            })
            .fold(0.0, f64::max)
    }
}

fn viol_of(x: f64, lb: f64, ub: f64) -> f64 {
    if x < lb {
        lb - x
    } else if x > ub {
        x - ub
    } else {
        0.0
    }
}

enum ColRef<'a> {
    Structural(&'a Vec<(u32, f64)>),
    Logical(u32),
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    /// Brute-force LP oracle for tiny problems: enumerate every candidate
    /// basic set and every bound assignment of the remaining variables,
    /// solve the square system, keep the best feasible point.
    fn brute_force(
        obj: &[f64],
        lb: &[f64],
        ub: &[f64],
        rows: &[(f64, f64, Vec<(usize, f64)>)],
    ) -> Option<f64> {
        let n = obj.len();
        let m = rows.len();
        let nv = n + m; // structural + logicals
        let var_lb: Vec<f64> = lb.iter().copied().chain(rows.iter().map(|r| r.0)).collect();
        let var_ub: Vec<f64> = ub.iter().copied().chain(rows.iter().map(|r| r.1)).collect();
        // full matrix: A x - s = 0
        let mut a = vec![vec![0.0f64; nv]; m];
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in &row.2 {
                a[r][c] = v;
            }
            a[r][n + r] = -1.0;
        }
        let mut best: Option<f64> = None;
        // choose basic subset of size m
        let mut subset: Vec<usize> = (0..m).collect();
        loop {
            // enumerate bound sides for nonbasic variables
            let nonbasic: Vec<usize> = (0..nv).filter(|v| !subset.contains(v)).collect();
            let k = nonbasic.len();
            for mask in 0..(1usize << k) {
                let mut x = vec![0.0f64; nv];
                let mut ok = true;
                for (bit, &v) in nonbasic.iter().enumerate() {
                    let at_up = mask & (1 << bit) != 0;
                    let val = if at_up { var_ub[v] } else { var_lb[v] };
                    if !val.is_finite() {
                        ok = false;
                        break;
                    }
                    x[v] = val;
                }
                if !ok {
                    continue;
                }
                // solve for basics: sum_B a[r][b] x[b] = -sum_N a[r][j] x[j]
                let mut mat = vec![vec![0.0f64; m + 1]; m];
                for r in 0..m {
                    for (c, &b) in subset.iter().enumerate() {
                        mat[r][c] = a[r][b];
                    }
                    let rhs: f64 = nonbasic.iter().map(|&j| a[r][j] * x[j]).sum();
                    mat[r][m] = -rhs;
                }
                // gaussian elimination
                let mut singular = false;
                for col in 0..m {
                    let piv = (col..m)
                        .max_by(|&i, &j| mat[i][col].abs().partial_cmp(&mat[j][col].abs()).unwrap())
                        .unwrap();
                    if mat[piv][col].abs() < 1e-10 {
                        singular = true;
                        break;
                    }
                    mat.swap(piv, col);
                    for r in col + 1..m {
                        let f = mat[r][col] / mat[col][col];
                        for c in col..=m {
                            mat[r][c] -= f * mat[col][c];
                        }
                    }
                }
                if singular {
                    continue;
                }
                let mut sol = vec![0.0f64; m];
                for r in (0..m).rev() {
                    let mut acc = mat[r][m];
                    for c in r + 1..m {
                        acc -= mat[r][c] * sol[c];
                    }
                    sol[r] = acc / mat[r][r];
                }
                for (c, &b) in subset.iter().enumerate() {
                    x[b] = sol[c];
                }
                // feasibility
                if (0..nv).any(|v| x[v] < var_lb[v] - 1e-7 || x[v] > var_ub[v] + 1e-7) {
                    continue;
                }
                let val: f64 = (0..n).map(|v| obj[v] * x[v]).sum();
                best = Some(best.map_or(val, |b: f64| b.min(val)));
            }
            // next subset
            let mut i = m;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if subset[i] != i + nv - m {
                    subset[i] += 1;
                    for j in i + 1..m {
                        subset[j] = subset[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn build(
        obj: &[f64],
        lb: &[f64],
        ub: &[f64],
        rows: &[(f64, f64, Vec<(usize, f64)>)],
    ) -> LpCore {
        let mut lp = LpCore::new(obj.to_vec(), lb.to_vec(), ub.to_vec());
        for (rlb, rub, coeffs) in rows {
            let cc: Vec<(u32, f64)> = coeffs.iter().map(|&(c, v)| (c as u32, v)).collect();
            lp.add_row(*rlb, *rub, &cc);
        }
        lp
    }

    #[test]
    fn simple_box_lp() {
        // min -x - y s.t. x + y <= 1, 0 <= x,y <= 1
        let mut lp = build(
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[(-INF, 1.0, vec![(0, 1.0), (1, 1.0)])],
        );
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_row() {
        // min x + 2y s.t. x + y = 2, 0 <= x <= 3, 0 <= y <= 3 -> x=2, y=0
        let mut lp = build(
            &[1.0, 2.0],
            &[0.0, 0.0],
            &[3.0, 3.0],
            &[(2.0, 2.0, vec![(0, 1.0), (1, 1.0)])],
        );
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() - 2.0).abs() < 1e-9);
        assert!((lp.value(0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_rows() {
        // x <= 1 and x >= 2
        let mut lp = build(
            &[1.0],
            &[0.0],
            &[10.0],
            &[
                (-INF, 1.0, vec![(0, 1.0)]),
                (2.0, INF, vec![(0, 1.0)]),
            ],
        );
        assert_eq!(lp.solve().unwrap(), LpStatus::Infeasible);
    }

    #[test]
    fn warm_restart_after_cut() {
        // min -x - y, x,y in [0,2], x + y <= 3
        let mut lp = build(
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[2.0, 2.0],
            &[(-INF, 3.0, vec![(0, 1.0), (1, 1.0)])],
        );
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 3.0).abs() < 1e-9);
        // cutting plane: x + 2y <= 2
        lp.add_row(-INF, 2.0, &[(0, 1.0), (1, 2.0)]);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        // optimum now x=2, y=0
        assert!((lp.objective() + 2.0).abs() < 1e-9, "{}", lp.objective());
        // bound change: fix x to 0 -> best is y=1 via cut
        lp.set_col_bounds(0, 0.0, 0.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 1.0).abs() < 1e-9);
        // relax again
        lp.set_col_bounds(0, 0.0, 2.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_many_ties() {
        // heavily degenerate: several identical rows
        let rows: Vec<(f64, f64, Vec<(usize, f64)>)> = (0..6)
            .map(|_| (-INF, 1.0, vec![(0, 1.0), (1, 1.0)]))
            .collect();
        let mut lp = build(&[-1.0, -2.0], &[0.0, 0.0], &[5.0, 5.0], &rows);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn range_rows_and_negative_bounds() {
        // min x - y with -1 <= x <= 1, -2 <= y <= 2, 0.5 <= x + y <= 1.5
        let mut lp = build(
            &[1.0, -1.0],
            &[-1.0, -2.0],
            &[1.0, 2.0],
            &[(0.5, 1.5, vec![(0, 1.0), (1, 1.0)])],
        );
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        // x = -1, y = 2 gives x+y = 1 in range, obj = -3
        assert!((lp.objective() + 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_on_random_lps() {
        // deterministic xorshift
        let mut s = 0x243F6A8885A308D3u64;
        let mut rng = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut checked = 0;
        for _case in 0..60 {
            let n = 3;
            let m = 2;
            let obj: Vec<f64> = (0..n).map(|_| (rng() * 4.0 * 8.0).round() / 8.0).collect();
            let lb: Vec<f64> = (0..n).map(|_| (rng().min(0.0) * 2.0 * 4.0).round() / 4.0).collect();
            let ub: Vec<f64> = lb
                .iter()
                .map(|&l| l + ((rng().abs() * 3.0 + 0.25) * 4.0).round() / 4.0)
                .collect();
            let rows: Vec<(f64, f64, Vec<(usize, f64)>)> = (0..m)
                .map(|_| {
                    let coeffs: Vec<(usize, f64)> = (0..n)
                        .filter_map(|c| {
                            let v = (rng() * 3.0 * 4.0).round() / 4.0;
                            if v.abs() > 0.2 {
                                Some((c, v))
                            } else {
                                None
                            }
                        })
                        .collect();
                    let lo = (rng() * 2.0 * 4.0).round() / 4.0;
                    let hi = lo + ((rng().abs() * 2.0) * 4.0).round() / 4.0;
                    (lo, hi, coeffs)
                })
                .collect();
            if rows.iter().any(|r| r.2.is_empty()) {
                continue;
            }
            let oracle = brute_force(&obj, &lb, &ub, &rows);
            let mut lp = build(&obj, &lb, &ub, &rows);
            let status = lp.solve().unwrap();
            match oracle {
                Some(best) => {
                    assert_eq!(status, LpStatus::Optimal, "oracle found {best}");
                    assert!(
                        (lp.objective() - best).abs() < 1e-6,
                        "lp {} vs oracle {best}",
                        lp.objective()
                    );
                    checked += 1;
                }
                None => {
                    assert_eq!(status, LpStatus::Infeasible);
                }
            }
        }
        assert!(checked > 10, "too few feasible cases: {checked}");
    }

    #[test]
    fn fixed_columns_are_respected() {
        let mut lp = build(
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[(-INF, 1.5, vec![(0, 1.0), (1, 1.0)])],
        );
        lp.set_col_bounds(0, 1.0, 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.value(0) - 1.0).abs() < 1e-12);
        assert!((lp.value(1) - 0.5).abs() < 1e-9);
    }
}

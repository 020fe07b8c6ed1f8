//! Bounded revised simplex.
//!
//! The problem is held in computational form `A x + s = 0`, where every
//! row `i` owns a logical variable `s_i = -a_i x` whose bounds encode the
//! row range. Each variable (structural or logical) carries its own bounds,
//! so branching only ever touches bounds and never the matrix.
//!
//! A solve starts from the current basis. If that basis is dual feasible
//! the dual simplex runs (bound-flipping ratio test, dual steepest edge
//! pricing); otherwise the primal simplex with a composite phase 1 runs.

use std::time::Instant;

use super::basis::{LpBasis, DEFAULT_REFACTOR_EVERY};

const NONE: usize = usize::MAX;

/// Linear program in row-range form: `min c^T x` subject to
/// `row_lower <= A x <= row_upper` and `col_lower <= x <= col_upper`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub costs: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    row_start: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
}

impl LpProblem {
    pub fn new() -> Self {
        LpProblem {
            row_start: vec![0],
            ..Default::default()
        }
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.costs.push(cost);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.costs.len() - 1
    }

    /// Adds `lower <= sum(coef * x_col) <= upper`. Duplicate columns are summed.
    pub fn add_row(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let mut sorted: Vec<(usize, f64)> = terms.to_vec();
        sorted.sort_by_key(|t| t.0);
        let mut last = NONE;
        for (c, v) in sorted {
            assert!(c < self.costs.len(), "row references unknown column {c}");
            if c == last {
                *self.row_vals.last_mut().unwrap() += v;
            } else {
                self.row_cols.push(c);
                self.row_vals.push(v);
                last = c;
            }
        }
        self.row_start.push(self.row_cols.len());
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        self.row_lower.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_start[i], self.row_start[i + 1]);
        self.row_cols[s..e].iter().copied().zip(self.row_vals[s..e].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.row_cols.len()
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest bound or row-range violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.col_lower[j] - v).max(v - self.col_upper[j]);
        }
        for (i, act) in self.activities(x).into_iter().enumerate() {
            worst = worst.max(self.row_lower[i] - act).max(act - self.row_upper[i]);
        }
        worst
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    /// The dual objective exceeded the cutoff set with
    /// [`SimplexSolver::set_cutoff`]; the LP optimum is at least that large.
    Cutoff,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Steepest edge (dual) / largest reduced cost (primal) with Harris
    /// ratio tests.
    Default,
    /// Lowest-index choices throughout; slow but cannot cycle.
    Bland,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    pub max_iterations: usize,
    pub rule: PivotRule,
    /// Geometric-mean row and column scaling.
    pub scale: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            pivot_tol: 1e-9,
            refactor_every: DEFAULT_REFACTOR_EVERY,
            max_iterations: 1_000_000,
            rule: PivotRule::Default,
            scale: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Nonbasic statuses plus the basis head; enough to warm start a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSnapshot {
    status: Vec<VarStatus>,
    head: Vec<u32>,
}

impl BasisSnapshot {
    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }
}

enum Step {
    Continue,
    Done(LpStatus),
}

/// Revised simplex solver over an [`LpProblem`].
#[derive(Clone)]
pub struct SimplexSolver {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    row_start: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    /// Column scale factors (powers of two): internal value = x / scale.
    col_scale: Vec<f64>,

    x: Vec<f64>,
    d: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    pos: Vec<usize>,
    basis: LpBasis,
    dse: Vec<f64>,
    factor_valid: bool,

    opts: SimplexOptions,
    iterations: usize,
    deadline: Option<Instant>,
    cutoff: f64,
    /// Original costs while perturbed or shifted costs are in use.
    saved_cost: Option<Vec<f64>>,
    allow_shift: bool,
    stalled: usize,

    // scratch
    work_col: Vec<f64>,
    work_row: Vec<f64>,
    alpha_row: Vec<f64>,
    alpha_touched: Vec<usize>,
    alpha_mark: Vec<bool>,
}

impl SimplexSolver {
    pub fn new(problem: &LpProblem, opts: SimplexOptions) -> Self {
        let n = problem.num_cols();
        let m = problem.num_rows();
        let mut col_count = vec![0usize; n];
        for &c in &problem.row_cols {
            col_count[c] += 1;
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + col_count[j];
        }
        let mut fill = col_start.clone();
        let nnz = problem.row_cols.len();
        let mut col_rows = vec![0usize; nnz];
        let mut col_vals = vec![0.0; nnz];
        for i in 0..m {
            for (j, a) in problem.row(i) {
                col_rows[fill[j]] = i;
                col_vals[fill[j]] = a;
                fill[j] += 1;
            }
        }

        let (row_scale, col_scale) = if opts.scale {
            geometric_scaling(problem)
        } else {
            (vec![1.0; m], vec![1.0; n])
        };
        for j in 0..n {
            for k in col_start[j]..col_start[j + 1] {
                col_vals[k] *= row_scale[col_rows[k]] * col_scale[j];
            }
        }
        let mut row_vals = problem.row_vals.clone();
        for i in 0..m {
            for k in problem.row_start[i]..problem.row_start[i + 1] {
                row_vals[k] *= row_scale[i] * col_scale[problem.row_cols[k]];
            }
        }

        let mut cost: Vec<f64> = (0..n).map(|j| problem.costs[j] * col_scale[j]).collect();
        cost.resize(n + m, 0.0);
        let mut lower: Vec<f64> = (0..n).map(|j| problem.col_lower[j] / col_scale[j]).collect();
        let mut upper: Vec<f64> = (0..n).map(|j| problem.col_upper[j] / col_scale[j]).collect();
        for i in 0..m {
            lower.push(-problem.row_upper[i] * row_scale[i]);
            upper.push(-problem.row_lower[i] * row_scale[i]);
        }

        let mut status = Vec::with_capacity(n + m);
        for j in 0..n {
            status.push(initial_status(cost[j], lower[j], upper[j]));
        }
        status.extend(std::iter::repeat_n(VarStatus::Basic, m));
        let head: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![NONE; n + m];
        for (p, &v) in head.iter().enumerate() {
            pos[v] = p;
        }
        let (basis, _) = LpBasis::factorize(0, opts.refactor_every, |_, _| {});

        SimplexSolver {
            n,
            m,
            cost,
            lower,
            upper,
            col_start,
            col_rows,
            col_vals,
            row_start: problem.row_start.clone(),
            row_cols: problem.row_cols.clone(),
            row_vals,
            col_scale,
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            status,
            head,
            pos,
            basis,
            dse: vec![1.0; m],
            factor_valid: false,
            opts,
            iterations: 0,
            deadline: None,
            cutoff: f64::INFINITY,
            saved_cost: None,
            allow_shift: false,
            stalled: 0,
            work_col: vec![0.0; m],
            work_row: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            alpha_touched: Vec::new(),
            alpha_mark: vec![false; n + m],
        }
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    /// Stop the dual simplex once its objective provably exceeds `cutoff`.
    pub fn set_cutoff(&mut self, cutoff: Option<f64>) {
        self.cutoff = cutoff.unwrap_or(f64::INFINITY);
    }

    pub fn set_rule(&mut self, rule: PivotRule) {
        self.opts.rule = rule;
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j] * self.col_scale[j], self.upper[j] * self.col_scale[j])
    }

    /// Changes the bounds of structural column `j`.
    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        debug_assert!(j < self.n);
        self.lower[j] = lower / self.col_scale[j];
        self.upper[j] = upper / self.col_scale[j];
    }

    /// Objective `c^T x` over structural columns.
    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Current structural values.
    pub fn primal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x[j] * self.col_scale[j]).collect()
    }

    /// Reduced cost of structural column `j` at the current basis.
    pub fn reduced_cost(&self, j: usize) -> f64 {
        self.d[j] / self.col_scale[j]
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            status: self.status.clone(),
            head: self.head.iter().map(|&v| v as u32).collect(),
        }
    }

    pub fn restore(&mut self, snap: &BasisSnapshot) {
        assert_eq!(snap.status.len(), self.n + self.m);
        self.status.clone_from(&snap.status);
        self.head = snap.head.iter().map(|&v| v as usize).collect();
        self.pos.iter_mut().for_each(|p| *p = NONE);
        for (p, &v) in self.head.iter().enumerate() {
            self.pos[v] = p;
        }
        self.factor_valid = false;
        self.dse.iter_mut().for_each(|w| *w = 1.0);
    }

    /// Resets to the all-logical basis.
    pub fn reset(&mut self) {
        for j in 0..self.n {
            self.status[j] = initial_status(self.cost[j], self.lower[j], self.upper[j]);
        }
        for i in 0..self.m {
            self.status[self.n + i] = VarStatus::Basic;
            self.head[i] = self.n + i;
        }
        self.pos.iter_mut().for_each(|p| *p = NONE);
        for (p, &v) in self.head.iter().enumerate() {
            self.pos[v] = p;
        }
        self.factor_valid = false;
        self.dse.iter_mut().for_each(|w| *w = 1.0);
    }

    // ------------------------------------------------------------------
    // Linear algebra helpers
    // ------------------------------------------------------------------

    fn scatter_column(&self, j: usize, out: &mut [f64], scale: f64) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_rows[k]] += scale * self.col_vals[k];
            }
        } else {
            out[j - self.n] += scale;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| self.col_vals[k] * y[self.col_rows[k]])
                .sum()
        } else {
            y[j - self.n]
        }
    }

    fn refactor(&mut self) -> bool {
        for _attempt in 0..4 {
            let (n, head) = (self.n, &self.head);
            let (cs, cr, cv) = (&self.col_start, &self.col_rows, &self.col_vals);
            let (basis, deficiencies) =
                LpBasis::factorize(self.m, self.opts.refactor_every, |p, buf| {
                    let j = head[p];
                    if j < n {
                        for k in cs[j]..cs[j + 1] {
                            buf.push((cr[k], cv[k]));
                        }
                    } else {
                        buf.push((j - n, 1.0));
                    }
                });
            if deficiencies.is_empty() {
                self.basis = basis;
                self.factor_valid = true;
                return true;
            }
            for def in deficiencies {
                let out = self.head[def.position];
                let logical = self.n + def.row;
                self.status[out] = self.nonbasic_status_for(out);
                self.pos[out] = NONE;
                self.head[def.position] = logical;
                self.pos[logical] = def.position;
                self.status[logical] = VarStatus::Basic;
                self.dse[def.position] = 1.0;
            }
        }
        false
    }

    fn nonbasic_status_for(&self, j: usize) -> VarStatus {
        let (l, u) = (self.lower[j], self.upper[j]);
        let v = self.x[j];
        if l.is_finite() && u.is_finite() {
            if (v - l).abs() <= (u - v).abs() {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            }
        } else if l.is_finite() {
            VarStatus::AtLower
        } else if u.is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    /// Repairs nonbasic statuses after bound changes.
    fn normalize_nonbasic(&mut self) {
        for j in 0..self.n + self.m {
            let s = self.status[j];
            if s == VarStatus::Basic {
                continue;
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            let fixed = match s {
                VarStatus::AtLower if !l.is_finite() => Some(if u.is_finite() {
                    VarStatus::AtUpper
                } else {
                    VarStatus::Free
                }),
                VarStatus::AtUpper if !u.is_finite() => Some(if l.is_finite() {
                    VarStatus::AtLower
                } else {
                    VarStatus::Free
                }),
                VarStatus::Free if l.is_finite() || u.is_finite() => Some(if l.is_finite() {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                }),
                _ => None,
            };
            if let Some(ns) = fixed {
                self.status[j] = ns;
            }
            self.x[j] = self.nonbasic_value(j);
        }
    }

    fn compute_primal(&mut self) {
        let mut rhs = std::mem::take(&mut self.work_col);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic {
                let v = self.nonbasic_value(j);
                self.x[j] = v;
                if v != 0.0 {
                    self.scatter_column(j, &mut rhs, -v);
                }
            }
        }
        self.basis.ftran(&mut rhs);
        for p in 0..self.m {
            self.x[self.head[p]] = rhs[p];
        }
        self.work_col = rhs;
    }

    fn compute_duals_with(&mut self, costs: &[f64]) {
        let mut y = std::mem::take(&mut self.work_row);
        for p in 0..self.m {
            y[p] = costs[self.head[p]];
        }
        self.basis.btran(&mut y);
        for j in 0..self.n + self.m {
            self.d[j] = if self.status[j] == VarStatus::Basic {
                0.0
            } else {
                costs[j] - self.dot_column(j, &y)
            };
        }
        self.work_row = y;
    }

    fn compute_duals(&mut self) {
        let costs = std::mem::take(&mut self.cost);
        self.compute_duals_with(&costs);
        self.cost = costs;
    }

    fn primal_infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - self.opts.primal_tol {
            self.lower[j] - v
        } else if v > self.upper[j] + self.opts.primal_tol {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    /// Signed distance of `d_j` from losing dual feasibility.
    fn dual_slack(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.d[j],
            VarStatus::AtUpper => -self.d[j],
            VarStatus::Free => -self.d[j].abs(),
            VarStatus::Basic => 0.0,
        }
    }

    fn dual_infeasibility(&self, j: usize) -> f64 {
        let dj = self.d[j];
        let tol = self.opts.dual_tol;
        match self.status[j] {
            VarStatus::Basic => 0.0,
            _ if self.lower[j] == self.upper[j] => 0.0,
            VarStatus::AtLower if dj < -tol => -dj,
            VarStatus::AtUpper if dj > tol => dj,
            VarStatus::Free if dj.abs() > tol => dj.abs(),
            _ => 0.0,
        }
    }

    /// Flips boxed nonbasic variables whose reduced cost points the other
    /// way. Returns `false` if some dual infeasibility cannot be removed.
    fn make_dual_feasible_by_flips(&mut self) -> bool {
        let mut ok = true;
        let mut flipped = false;
        for j in 0..self.n + self.m {
            if self.dual_infeasibility(j) == 0.0 {
                continue;
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            match self.status[j] {
                VarStatus::AtLower if u.is_finite() => {
                    self.status[j] = VarStatus::AtUpper;
                    flipped = true;
                }
                VarStatus::AtUpper if l.is_finite() => {
                    self.status[j] = VarStatus::AtLower;
                    flipped = true;
                }
                _ if self.allow_shift => {
                    // Shift the cost so the reduced cost is exactly zero;
                    // the original costs are restored before the final check.
                    self.saved_cost.get_or_insert_with(|| self.cost.clone());
                    self.cost[j] -= self.d[j];
                    self.d[j] = 0.0;
                }
                _ => ok = false,
            }
        }
        if flipped {
            self.compute_primal();
        }
        ok
    }

    /// Perturbs structural costs away from zero reduced costs to break
    /// dual degeneracy. Directions keep nonbasic columns dual feasible.
    fn perturb_costs(&mut self) {
        self.saved_cost.get_or_insert_with(|| self.cost.clone());
        for j in 0..self.n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l == u {
                continue;
            }
            let xi = PERTURBATION * (1.0 + self.cost[j].abs()) * (1.0 + unit_hash(j));
            let dir = match self.status[j] {
                VarStatus::AtLower => 1.0,
                VarStatus::AtUpper => -1.0,
                VarStatus::Free | VarStatus::Basic => 0.0,
            };
            self.cost[j] += dir * xi;
        }
        self.compute_duals();
    }

    fn check_limits(&self) -> Option<LpStatus> {
        if self.iterations >= self.opts.max_iterations {
            return Some(LpStatus::IterationLimit);
        }
        if self.iterations % 64 == 0 {
            if let Some(dl) = self.deadline {
                if Instant::now() >= dl {
                    return Some(LpStatus::TimeLimit);
                }
            }
        }
        None
    }

    // ------------------------------------------------------------------
    // Driver
    // ------------------------------------------------------------------

    /// Solves from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        let status = self.solve_once();
        if status == LpStatus::NumericalFailure && self.opts.rule == PivotRule::Default {
            // Retry once from scratch with Bland's rule.
            self.opts.rule = PivotRule::Bland;
            self.reset();
            let retry = self.solve_once();
            self.opts.rule = PivotRule::Default;
            return retry;
        }
        status
    }

    fn solve_once(&mut self) -> LpStatus {
        self.normalize_nonbasic();
        if !self.factor_valid && !self.refactor() {
            return LpStatus::NumericalFailure;
        }
        self.compute_primal();
        self.compute_duals();
        self.stalled = 0;
        for round in 0..8 {
            self.allow_shift = round == 0 && self.opts.rule == PivotRule::Default;
            let mut status = if self.make_dual_feasible_by_flips() {
                self.dual_simplex()
            } else {
                self.primal_simplex()
            };
            self.allow_shift = false;
            if let Some(orig) = self.saved_cost.take() {
                self.cost = orig;
                if status != LpStatus::Optimal && status != LpStatus::Infeasible {
                    // Only primal infeasibility survives the cost change.
                    if status == LpStatus::Cutoff {
                        status = LpStatus::NumericalFailure;
                    }
                }
            }
            if status != LpStatus::Optimal {
                return status;
            }
            // Verify from a fresh factorization.
            if !self.refactor() {
                return LpStatus::NumericalFailure;
            }
            self.compute_primal();
            self.compute_duals();
            let primal_ok = (0..self.m).all(|p| self.primal_infeasibility(self.head[p]) == 0.0);
            let dual_ok = (0..self.n + self.m).all(|j| self.dual_infeasibility(j) == 0.0);
            if primal_ok && dual_ok {
                return LpStatus::Optimal;
            }
        }
        LpStatus::NumericalFailure
    }

    // ------------------------------------------------------------------
    // Dual simplex
    // ------------------------------------------------------------------

    fn dual_simplex(&mut self) -> LpStatus {
        loop {
            if let Some(s) = self.check_limits() {
                return s;
            }
            if self.basis.needs_refactor() {
                if !self.refactor() {
                    return LpStatus::NumericalFailure;
                }
                self.compute_primal();
                self.compute_duals();
                if !self.make_dual_feasible_by_flips() {
                    return self.primal_simplex();
                }
            }
            if self.cutoff.is_finite()
                && self.saved_cost.is_none()
                && self.iterations % 8 == 0
                && self.objective() > self.cutoff
            {
                return LpStatus::Cutoff;
            }
            let before = self.objective();
            match self.dual_iteration() {
                Step::Continue => {}
                Step::Done(s) => return s,
            }
            if self.objective() > before + 1e-9 * (1.0 + before.abs()) {
                self.stalled = 0;
            } else {
                self.stalled += 1;
                if self.stalled > STALL_LIMIT && self.allow_shift && self.saved_cost.is_none() {
                    self.perturb_costs();
                    if !self.make_dual_feasible_by_flips() {
                        return self.primal_simplex();
                    }
                }
            }
        }
    }

    fn choose_leaving_row(&self) -> Option<usize> {
        let mut best = None;
        let mut best_score = 0.0;
        for p in 0..self.m {
            let inf = self.primal_infeasibility(self.head[p]);
            if inf <= 0.0 {
                continue;
            }
            match self.opts.rule {
                PivotRule::Bland => {
                    let better = match best {
                        None => true,
                        Some(b) => self.head[p] < self.head[b],
                    };
                    if better {
                        best = Some(p);
                    }
                }
                PivotRule::Default => {
                    let score = inf * inf / self.dse[p];
                    if score > best_score {
                        best_score = score;
                        best = Some(p);
                    }
                }
            }
        }
        best
    }

    /// Computes the pivot row `alpha_row[j] = rho^T a_j` for nonbasic `j`.
    fn compute_pivot_row(&mut self, rho: &[f64]) {
        for &j in &self.alpha_touched {
            self.alpha_row[j] = 0.0;
            self.alpha_mark[j] = false;
        }
        self.alpha_touched.clear();
        for (i, &r) in rho.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_cols[k];
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                if !self.alpha_mark[j] {
                    self.alpha_mark[j] = true;
                    self.alpha_touched.push(j);
                }
                self.alpha_row[j] += r * self.row_vals[k];
            }
            let lj = self.n + i;
            if self.status[lj] != VarStatus::Basic {
                if !self.alpha_mark[lj] {
                    self.alpha_mark[lj] = true;
                    self.alpha_touched.push(lj);
                }
                self.alpha_row[lj] += r;
            }
        }
    }

    fn dual_iteration(&mut self) -> Step {
        let Some(r) = self.choose_leaving_row() else {
            return Step::Done(LpStatus::Optimal);
        };
        let leaving = self.head[r];
        let to_upper = self.x[leaving] > self.upper[leaving];
        let bound = if to_upper {
            self.upper[leaving]
        } else {
            self.lower[leaving]
        };
        let mut delta = self.x[leaving] - bound;

        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.basis.btran(&mut rho);
        self.compute_pivot_row(&rho);

        // Candidates: nonbasic j whose reduced cost hits zero as the dual
        // step grows.
        let sign = if to_upper { 1.0 } else { -1.0 };
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for &j in &self.alpha_touched {
            let a = self.alpha_row[j];
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let eligible = match self.status[j] {
                VarStatus::AtLower => sign * a > 0.0,
                VarStatus::AtUpper => sign * a < 0.0,
                VarStatus::Free => true,
                VarStatus::Basic => false,
            };
            if eligible {
                let ratio = self.dual_slack(j).max(0.0) / a.abs();
                cands.push((j, ratio, a.abs()));
            }
        }
        if cands.is_empty() {
            return Step::Done(LpStatus::Infeasible);
        }
        // Drop pivots that are tiny relative to the row.
        let amax = cands.iter().map(|c| c.2).fold(0.0, f64::max);
        let floor = RELATIVE_PIVOT_TOL * amax;
        cands.retain(|c| c.2 >= floor);

        let (entering, flips) = match self.opts.rule {
            PivotRule::Bland => {
                let min_ratio = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                let q = cands
                    .iter()
                    .filter(|c| c.1 <= min_ratio + 1e-12)
                    .map(|c| c.0)
                    .min()
                    .unwrap();
                (q, Vec::new())
            }
            PivotRule::Default => self.bound_flipping_ratio_test(&mut cands, delta.abs()),
        };

        // Bound flips shift the basic solution.
        if !flips.is_empty() {
            let mut shift = vec![0.0; self.m];
            for &j in &flips {
                let (from, to) = match self.status[j] {
                    VarStatus::AtLower => (self.lower[j], self.upper[j]),
                    _ => (self.upper[j], self.lower[j]),
                };
                self.status[j] = if self.status[j] == VarStatus::AtLower {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[j] = to;
                self.scatter_column(j, &mut shift, -(to - from));
            }
            self.basis.ftran(&mut shift);
            for p in 0..self.m {
                self.x[self.head[p]] += shift[p];
            }
            delta = self.x[leaving] - bound;
        }

        let mut alpha_q = vec![0.0; self.m];
        self.scatter_column(entering, &mut alpha_q, 1.0);
        self.basis.ftran(&mut alpha_q);
        let alpha_rq = alpha_q[r];
        let check = self.alpha_row[entering];
        if alpha_rq.abs() < 1e-12
            || (alpha_rq - check).abs() > 1e-7 * (1.0 + alpha_rq.abs().max(check.abs()))
        {
            // Inconsistent pivot: refactor and try again.
            if !self.refactor() {
                return Step::Done(LpStatus::NumericalFailure);
            }
            self.compute_primal();
            self.compute_duals();
            self.iterations += 1;
            if !self.make_dual_feasible_by_flips() {
                return Step::Done(self.primal_simplex());
            }
            return Step::Continue;
        }

        // Dual update.
        let theta_d = self.d[entering] / alpha_rq;
        for idx in 0..self.alpha_touched.len() {
            let j = self.alpha_touched[idx];
            self.d[j] -= theta_d * self.alpha_row[j];
        }
        self.d[entering] = 0.0;
        self.d[leaving] = -theta_d;

        // Primal update.
        let theta_p = delta / alpha_rq;
        for p in 0..self.m {
            let a = alpha_q[p];
            if a != 0.0 {
                self.x[self.head[p]] -= theta_p * a;
            }
        }
        self.x[entering] += theta_p;
        self.x[leaving] = bound;

        // Dual steepest edge weights.
        if self.opts.rule == PivotRule::Default {
            let w_r = rho.iter().map(|v| v * v).sum::<f64>();
            let mut tau = rho;
            self.basis.ftran(&mut tau);
            for p in 0..self.m {
                if p == r {
                    continue;
                }
                let a = alpha_q[p];
                if a == 0.0 {
                    continue;
                }
                let ratio = a / alpha_rq;
                let w = self.dse[p] - 2.0 * ratio * tau[p] + ratio * ratio * w_r;
                self.dse[p] = w.max(1e-4);
            }
            self.dse[r] = (w_r / (alpha_rq * alpha_rq)).max(1e-4);
        }

        self.pivot(r, entering, leaving, to_upper, &alpha_q);
        Step::Continue
    }

    /// Long-step dual ratio test. Returns the entering variable and the
    /// boxed variables passed over (to be flipped to their other bound).
    fn bound_flipping_ratio_test(
        &self,
        cands: &mut [(usize, f64, f64)],
        infeasibility: f64,
    ) -> (usize, Vec<usize>) {
        cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let tol = self.opts.dual_tol;
        let mut slope = infeasibility;
        let mut flips = Vec::new();
        let mut start = 0;
        while start < cands.len() {
            // Harris bound over remaining candidates.
            let theta_max = cands[start..]
                .iter()
                .map(|c| (self.dual_slack(c.0) + tol).max(0.0) / c.2)
                .fold(f64::INFINITY, f64::min);
            // Group of candidates within the Harris bound.
            let group_end = start
                + cands[start..]
                    .iter()
                    .take_while(|c| c.1 <= theta_max)
                    .count()
                    .max(1);
            let group = &cands[start..group_end];
            let drop: f64 = group
                .iter()
                .map(|&(j, _, a)| a * (self.upper[j] - self.lower[j]))
                .sum();
            let all_boxed = group.iter().all(|&(j, _, _)| {
                self.lower[j].is_finite() && self.upper[j].is_finite()
            });
            if all_boxed && slope - drop > 0.0 && group_end < cands.len() {
                slope -= drop;
                flips.extend(group.iter().map(|c| c.0));
                start = group_end;
                continue;
            }
            let best = group
                .iter()
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
                .unwrap();
            return (best.0, flips);
        }
        unreachable!("candidate list is non-empty")
    }

    fn pivot(&mut self, r: usize, entering: usize, leaving: usize, to_upper: bool, alpha_q: &[f64]) {
        self.basis.update(r, alpha_q);
        self.head[r] = entering;
        self.pos[entering] = r;
        self.pos[leaving] = NONE;
        self.status[entering] = VarStatus::Basic;
        self.status[leaving] = if self.lower[leaving] == self.upper[leaving] {
            VarStatus::AtLower
        } else if to_upper {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        self.x[leaving] = self.nonbasic_value(leaving);
        self.iterations += 1;
    }

    // ------------------------------------------------------------------
    // Primal simplex
    // ------------------------------------------------------------------

    fn primal_simplex(&mut self) -> LpStatus {
        let mut since_refactor_check = 0usize;
        loop {
            if let Some(s) = self.check_limits() {
                return s;
            }
            if self.basis.needs_refactor() {
                if !self.refactor() {
                    return LpStatus::NumericalFailure;
                }
                self.compute_primal();
                since_refactor_check = 0;
            }
            since_refactor_check += 1;

            // Phase costs.
            let mut phase_one = false;
            let mut phase_cost = vec![0.0; self.n + self.m];
            for p in 0..self.m {
                let j = self.head[p];
                if self.x[j] < self.lower[j] - self.opts.primal_tol {
                    phase_cost[j] = -1.0;
                    phase_one = true;
                } else if self.x[j] > self.upper[j] + self.opts.primal_tol {
                    phase_cost[j] = 1.0;
                    phase_one = true;
                }
            }
            if !phase_one {
                phase_cost.copy_from_slice(&self.cost);
            }
            self.compute_duals_with(&phase_cost);

            // Pricing.
            let tol = self.opts.dual_tol;
            let mut entering = NONE;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let dj = self.d[j];
                let score = match self.status[j] {
                    VarStatus::AtLower if dj < -tol => -dj,
                    VarStatus::AtUpper if dj > tol => dj,
                    VarStatus::Free if dj.abs() > tol => dj.abs(),
                    _ => 0.0,
                };
                if score <= 0.0 {
                    continue;
                }
                match self.opts.rule {
                    PivotRule::Bland => {
                        entering = j;
                        break;
                    }
                    PivotRule::Default => {
                        if score > best {
                            best = score;
                            entering = j;
                        }
                    }
                }
            }
            if entering == NONE {
                if phase_one {
                    return LpStatus::Infeasible;
                }
                self.compute_duals();
                return LpStatus::Optimal;
            }
            let dir = if self.d[entering] < 0.0 { 1.0 } else { -1.0 };

            let mut alpha = vec![0.0; self.m];
            self.scatter_column(entering, &mut alpha, 1.0);
            self.basis.ftran(&mut alpha);

            // Ratio test on x_B(t) = x_B - t * dir * alpha.
            let ptol = self.opts.primal_tol;
            let range = self.upper[entering] - self.lower[entering];
            let mut t_max = if range.is_finite() { range } else { f64::INFINITY };
            let limit = |j: usize, rate: f64, x: f64, slack: f64| -> f64 {
                // rate < 0 means decreasing toward lower bounds.
                let (l, u) = (self.lower[j], self.upper[j]);
                if rate < 0.0 {
                    if x >= l - ptol {
                        (x - l + slack) / -rate
                    } else {
                        f64::INFINITY
                    }
                } else if x <= u + ptol {
                    (u - x + slack) / rate
                } else {
                    f64::INFINITY
                }
            };
            // Harris pass 1.
            for p in 0..self.m {
                let a = alpha[p];
                if a.abs() <= self.opts.pivot_tol {
                    continue;
                }
                let j = self.head[p];
                let rate = -dir * a;
                let t = limit(j, rate, self.x[j], ptol);
                if t < t_max {
                    t_max = t;
                }
            }
            if !t_max.is_finite() {
                return if phase_one {
                    LpStatus::NumericalFailure
                } else {
                    LpStatus::Unbounded
                };
            }
            // Pass 2.
            let mut leave_pos = NONE;
            let mut leave_alpha = 0.0;
            let mut leave_t = 0.0;
            for p in 0..self.m {
                let a = alpha[p];
                if a.abs() <= self.opts.pivot_tol {
                    continue;
                }
                let j = self.head[p];
                let rate = -dir * a;
                let t = limit(j, rate, self.x[j], 0.0);
                if t <= t_max {
                    let better = match self.opts.rule {
                        PivotRule::Bland => leave_pos == NONE || j < self.head[leave_pos],
                        PivotRule::Default => a.abs() > leave_alpha,
                    };
                    if better {
                        leave_pos = p;
                        leave_alpha = a.abs();
                        leave_t = t.max(0.0);
                    }
                }
            }
            if leave_pos == NONE || (range.is_finite() && range <= leave_t) {
                // Entering variable moves to its other bound.
                if !range.is_finite() {
                    return LpStatus::NumericalFailure;
                }
                let t = range;
                for p in 0..self.m {
                    let a = alpha[p];
                    if a != 0.0 {
                        self.x[self.head[p]] -= t * dir * a;
                    }
                }
                self.status[entering] = if dir > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[entering] = self.nonbasic_value(entering);
                self.iterations += 1;
                continue;
            }
            let t = leave_t;
            let leaving = self.head[leave_pos];
            let rate = -dir * alpha[leave_pos];
            let to_upper = rate > 0.0;
            for p in 0..self.m {
                let a = alpha[p];
                if a != 0.0 {
                    self.x[self.head[p]] -= t * dir * a;
                }
            }
            self.x[entering] += t * dir;
            let alpha_copy = alpha;
            self.pivot(leave_pos, entering, leaving, to_upper, &alpha_copy);
            if since_refactor_check > 50 {
                self.compute_primal();
                since_refactor_check = 0;
            }
        }
    }
}

/// Row and column factors, rounded to powers of two so that scaling is
/// exact, from a few passes of geometric-mean equilibration.
fn geometric_scaling(p: &LpProblem) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (p.num_rows(), p.num_cols());
    let mut row = vec![1.0; m];
    let mut col = vec![1.0; n];
    let pow2 = |v: f64| if v.is_finite() && v > 0.0 { v.log2().round().exp2() } else { 1.0 };
    for _pass in 0..6 {
        let mut cmin = vec![f64::INFINITY; n];
        let mut cmax = vec![0.0f64; n];
        for i in 0..m {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (j, a) in p.row(i) {
                let v = (a * col[j]).abs();
                if v > 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if hi > 0.0 {
                row[i] = 1.0 / (lo * hi).sqrt();
            }
            for (j, a) in p.row(i) {
                let v = (a * row[i]).abs();
                if v > 0.0 {
                    cmin[j] = cmin[j].min(v);
                    cmax[j] = cmax[j].max(v);
                }
            }
        }
        for j in 0..n {
            if cmax[j] > 0.0 {
                col[j] = 1.0 / (cmin[j] * cmax[j]).sqrt();
            }
        }
    }
    (row.into_iter().map(pow2).collect(), col.into_iter().map(pow2).collect())
}

const PERTURBATION: f64 = 1e-6;
const RELATIVE_PIVOT_TOL: f64 = 1e-7;
const STALL_LIMIT: usize = 50;

/// Deterministic value in `[0, 1)` per column index.
fn unit_hash(j: usize) -> f64 {
    let mut z = (j as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn initial_status(cost: f64, lower: f64, upper: f64) -> VarStatus {
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => {
            if cost < 0.0 {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            }
        }
        (true, false) => VarStatus::AtLower,
        (false, true) => VarStatus::AtUpper,
        (false, false) => VarStatus::Free,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &LpProblem) -> (LpStatus, SimplexSolver) {
        let mut s = SimplexSolver::new(p, SimplexOptions::default());
        let st = s.solve();
        (st, s)
    }

    #[test]
    fn covering_lp_vertex() {
        // min x + y s.t. x + 2y >= 2
        let mut p = LpProblem::new();
        let x = p.add_col(1.0, 0.0, f64::INFINITY);
        let y = p.add_col(1.0, 0.0, f64::INFINITY);
        p.add_row(&[(x, 1.0), (y, 2.0)], 2.0, f64::INFINITY);
        let (st, s) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() - 1.0).abs() < 1e-9);
        assert!((s.primal()[1] - 1.0).abs() < 1e-9);
        assert!(s.primal()[0].abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut p = LpProblem::new();
        let x = p.add_col(1.0, 0.0, f64::INFINITY);
        p.add_row(&[(x, 1.0)], f64::NEG_INFINITY, -1.0);
        assert_eq!(solve(&p).0, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut p = LpProblem::new();
        p.add_col(-1.0, 0.0, f64::INFINITY);
        assert_eq!(solve(&p).0, LpStatus::Unbounded);
    }

    #[test]
    fn maximization_with_box() {
        // max x + 2y, x + y <= 4, 0<=x<=3, 0<=y<=3 -> (1,3) obj 7
        let mut p = LpProblem::new();
        let x = p.add_col(-1.0, 0.0, 3.0);
        let y = p.add_col(-2.0, 0.0, 3.0);
        p.add_row(&[(x, 1.0), (y, 1.0)], f64::NEG_INFINITY, 4.0);
        let (st, s) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() + 7.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free_variable() {
        // min z, z free, z - x = -3, x in [1, 5] -> z = -2
        let mut p = LpProblem::new();
        let z = p.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let x = p.add_col(0.0, 1.0, 5.0);
        p.add_row(&[(z, 1.0), (x, -1.0)], -3.0, -3.0);
        let (st, s) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_bound_change() {
        // min -x - y, x + y <= 1.5, 0 <= x,y <= 1
        let mut p = LpProblem::new();
        let x = p.add_col(-1.0, 0.0, 1.0);
        let y = p.add_col(-1.0, 0.0, 1.0);
        p.add_row(&[(x, 1.0), (y, 1.0)], f64::NEG_INFINITY, 1.5);
        let mut s = SimplexSolver::new(&p, SimplexOptions::default());
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() + 1.5).abs() < 1e-9);
        let snap = s.snapshot();
        s.set_col_bounds(x, 1.0, 1.0);
        s.set_col_bounds(y, 1.0, 1.0);
        assert_eq!(s.solve(), LpStatus::Infeasible);
        s.set_col_bounds(y, 0.0, 0.0);
        s.restore(&snap);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() + 1.0).abs() < 1e-9);
    }
}

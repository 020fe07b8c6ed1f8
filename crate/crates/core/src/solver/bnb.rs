//! Branch and bound over the simplex engine, with integer and SOS2
//! branching.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::lp::{BasisSnapshot, LpProblem, LpStatus, SimplexOptions, SimplexSolver};
use crate::milp::{MilpModel, Tolerances};

const NONE: usize = usize::MAX;

/// Default relative optimality gap.
pub const DEFAULT_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Relative gap at which a node is pruned against the incumbent.
    pub gap: f64,
    /// Absolute gap, applied alongside the relative one.
    pub abs_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    /// Number of tree workers; 1 is the deterministic mode.
    pub threads: usize,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    /// Feasible assignment (over all model variables) to start from.
    pub initial_solution: Option<Vec<f64>>,
    pub refactor_every: usize,
    /// Run LP diving heuristics at the root and every this many nodes
    /// (0 disables them).
    pub dive_every: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            gap: DEFAULT_GAP,
            abs_gap: 1e-9,
            time_limit: None,
            node_limit: None,
            threads: 1,
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            initial_solution: None,
            refactor_every: super::basis::DEFAULT_REFACTOR_EVERY,
            dive_every: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Search finished within a gap looser than the default tolerance.
    GapLimit,
    TimeLimit,
    NodeLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
        }
    }

    /// True when an incumbent, if any, is proven within the requested gap.
    pub fn is_proven(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Values of every model variable for the best solution found.
    #[serde(skip)]
    pub values: Option<Vec<f64>>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time_s: f64,
}

/// Member of an SOS2 set after presolve; removed members keep their value.
#[derive(Debug, Clone, Copy)]
enum Member {
    Col(usize),
    Fixed(f64),
}

/// LP relaxation of a model with fixed variables removed and singleton
/// rows turned into bounds.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub lp: LpProblem,
    var_col: Vec<usize>,
    col_var: Vec<usize>,
    fixed: Vec<f64>,
    int_cols: Vec<usize>,
    sos: Vec<Vec<Member>>,
    /// Objective contribution of the removed (fixed) variables.
    pub objective_offset: f64,
}

impl Relaxation {
    /// Returns `None` when presolve proves the model infeasible.
    pub fn build(model: &MilpModel, feas_tol: f64) -> Option<Self> {
        let n = model.variables.len();
        let mut lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
        let mut hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
        let discrete: Vec<bool> = model.variables.iter().map(|v| v.kind.is_discrete()).collect();
        for j in 0..n {
            if discrete[j] {
                lo[j] = (lo[j] - 1e-9).ceil();
                hi[j] = (hi[j] + 1e-9).floor();
            }
            if lo[j] > hi[j] + feas_tol {
                return None;
            }
            if lo[j] > hi[j] {
                hi[j] = lo[j];
            }
        }

        let mut active = vec![true; model.constraints.len()];
        loop {
            let mut changed = false;
            for (r, c) in model.constraints.iter().enumerate() {
                if !active[r] {
                    continue;
                }
                let mut constant = 0.0;
                let mut free: Option<(usize, f64)> = None;
                let mut n_free = 0;
                for &(v, a) in &c.terms {
                    if lo[v] == hi[v] {
                        constant += a * lo[v];
                    } else {
                        n_free += 1;
                        free = Some((v, a));
                    }
                }
                let (rl, ru) = c.range();
                if n_free == 0 {
                    if constant < rl - feas_tol * (1.0 + rl.abs())
                        || constant > ru + feas_tol * (1.0 + ru.abs())
                    {
                        return None;
                    }
                    active[r] = false;
                    changed = true;
                } else if n_free == 1 {
                    let (v, a) = free.unwrap();
                    let (mut l, mut u) = ((rl - constant) / a, (ru - constant) / a);
                    if a < 0.0 {
                        std::mem::swap(&mut l, &mut u);
                    }
                    if discrete[v] {
                        l = (l - 1e-9).ceil();
                        u = (u + 1e-9).floor();
                    }
                    let nl = lo[v].max(l);
                    let nu = hi[v].min(u);
                    if nl > nu + feas_tol * (1.0 + nu.abs()) {
                        return None;
                    }
                    lo[v] = nl;
                    hi[v] = nu.max(nl);
                    active[r] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut lp = LpProblem::new();
        let mut var_col = vec![NONE; n];
        let mut col_var = Vec::new();
        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective {
            cost[v] += c;
        }
        for j in 0..n {
            if lo[j] != hi[j] {
                var_col[j] = lp.add_col(cost[j], lo[j], hi[j]);
                col_var.push(j);
            }
        }
        for (r, c) in model.constraints.iter().enumerate() {
            if !active[r] {
                continue;
            }
            let mut constant = 0.0;
            let mut terms = Vec::with_capacity(c.terms.len());
            for &(v, a) in &c.terms {
                if var_col[v] == NONE {
                    constant += a * lo[v];
                } else {
                    terms.push((var_col[v], a));
                }
            }
            let (rl, ru) = c.range();
            lp.add_row(&terms, rl - constant, ru - constant);
        }
        let int_cols = (0..col_var.len()).filter(|&c| discrete[col_var[c]]).collect();
        let sos = model
            .sos2
            .iter()
            .map(|s| {
                s.members
                    .iter()
                    .map(|&v| {
                        if var_col[v] == NONE {
                            Member::Fixed(lo[v])
                        } else {
                            Member::Col(var_col[v])
                        }
                    })
                    .collect()
            })
            .collect();
        let objective_offset = (0..n).filter(|&j| var_col[j] == NONE).map(|j| cost[j] * lo[j]).sum();
        let fixed = lo;
        Some(Relaxation {
            objective_offset,
            lp,
            var_col,
            col_var,
            fixed,
            int_cols,
            sos,
        })
    }

    pub fn num_cols(&self) -> usize {
        self.col_var.len()
    }

    pub fn column_of(&self, var: usize) -> Option<usize> {
        let c = self.var_col[var];
        (c != NONE).then_some(c)
    }

    /// Column values of a full model assignment.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.col_var.iter().map(|&v| x[v]).collect()
    }

    /// Expands column values to a full model assignment.
    pub fn expand(&self, cols: &[f64]) -> Vec<f64> {
        let mut x = self.fixed.clone();
        for (c, &v) in self.col_var.iter().enumerate() {
            x[v] = cols[c];
        }
        x
    }
}

/// Solves the LP relaxation of `model` (integrality and SOS2 ignored).
pub fn solve_lp(model: &MilpModel) -> LpSolution {
    let Some(relax) = Relaxation::build_continuous(model) else {
        return LpSolution {
            status: LpStatus::Infeasible,
            objective: None,
            values: None,
        };
    };
    let mut s = SimplexSolver::new(&relax.lp, SimplexOptions::default());
    let status = s.solve();
    if status == LpStatus::Optimal {
        let x = relax.expand(&s.primal());
        LpSolution {
            status,
            objective: Some(model.objective_value(&x)),
            values: Some(x),
        }
    } else {
        LpSolution {
            status,
            objective: None,
            values: None,
        }
    }
}

impl Relaxation {
    fn build_continuous(model: &MilpModel) -> Option<Self> {
        let mut m = model.clone();
        for v in &mut m.variables {
            v.kind = crate::milp::VarKind::Continuous;
        }
        m.sos2.clear();
        Relaxation::build(&m, 1e-9)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub values: Option<Vec<f64>>,
}

// ----------------------------------------------------------------------
// Tree
// ----------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Node {
    id: u64,
    parent: u64,
    bound: f64,
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Arc<BasisSnapshot>>,
}

struct Queued(Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // BinaryHeap is a max-heap: invert so the lowest bound (then lowest id)
    // comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then(other.0.id.cmp(&self.0.id))
    }
}

/// Split of an SOS2 set at 1-based index `r`: the left child zeroes members
/// `r+1..N`, the right child zeroes `1..r-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sos2Split {
    pub split: usize,
    pub left_zero: Vec<usize>,
    pub right_zero: Vec<usize>,
}

/// Chooses the split point for a violated SOS2 set, or `None` if the
/// values already satisfy it. Indices in the result are 0-based member
/// positions.
pub fn branch_sos2(values: &[f64], tol: f64) -> Option<Sos2Split> {
    let nz: Vec<usize> = (0..values.len()).filter(|&k| values[k].abs() > tol).collect();
    let (first, last) = (*nz.first()?, *nz.last()?);
    if last <= first + 1 {
        return None;
    }
    let n = values.len();
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let avg: f64 = values
        .iter()
        .enumerate()
        .map(|(k, v)| (k + 1) as f64 * v.abs())
        .sum::<f64>()
        / total;
    // Both children must cut off the current point: first < r-1 < last (0-based).
    let r = (avg - 1e-9).ceil() as usize;
    let r = r.clamp(2, n - 1).clamp(first + 2, last);
    Some(Sos2Split {
        split: r,
        left_zero: (r..n).collect(),
        right_zero: (0..r - 1).collect(),
    })
}

enum Outcome {
    Pruned,
    Integral(f64, Vec<f64>),
    Branch([Node; 2], usize),
    Unbounded,
    Limit,
}

struct Worker<'a> {
    relax: &'a Relaxation,
    model: &'a MilpModel,
    opts: &'a MilpOptions,
    lp: SimplexSolver,
    applied: Vec<usize>,
    /// Node whose optimal basis the LP currently holds.
    last_parent: Option<u64>,
}

impl<'a> Worker<'a> {
    fn new(relax: &'a Relaxation, model: &'a MilpModel, opts: &'a MilpOptions, deadline: Option<Instant>) -> Self {
        let mut lp = SimplexSolver::new(
            &relax.lp,
            SimplexOptions {
                primal_tol: opts.feasibility_tol,
                refactor_every: opts.refactor_every,
                ..Default::default()
            },
        );
        lp.set_deadline(deadline);
        Worker {
            relax,
            model,
            opts,
            lp,
            applied: Vec::new(),
            last_parent: None,
        }
    }

    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for &c in &self.applied {
            self.lp
                .set_col_bounds(c, self.relax.lp.col_lower[c], self.relax.lp.col_upper[c]);
        }
        self.applied.clear();
        for &(c, lo, hi) in changes {
            let (cl, cu) = self.lp.col_bounds(c);
            self.lp.set_col_bounds(c, cl.max(lo), cu.min(hi));
            self.applied.push(c);
        }
    }

    fn evaluate(
        &mut self,
        node: &Node,
        continuing: bool,
        cutoff: f64,
        dives: &[DiveRule],
        guide: Option<&[f64]>,
        found: &mut Vec<(f64, Vec<f64>)>,
        next_id: &mut impl FnMut() -> u64,
    ) -> Outcome {
        self.apply(&node.changes);
        if !continuing {
            match &node.basis {
                Some(b) => self.lp.restore(b),
                None => self.lp.reset(),
            }
        }
        let offset = self.relax.objective_offset;
        self.lp.set_cutoff(cutoff.is_finite().then_some(cutoff - offset));
        let status = self.lp.solve();
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible | LpStatus::Cutoff => return Outcome::Pruned,
            LpStatus::Unbounded => return Outcome::Unbounded,
            LpStatus::TimeLimit | LpStatus::IterationLimit => return Outcome::Limit,
            LpStatus::NumericalFailure => {
                // Treat as a lost subtree rather than aborting the search.
                return Outcome::Pruned;
            }
        }
        let obj = self.lp.objective() + offset;
        if obj >= cutoff {
            return Outcome::Pruned;
        }
        let x = self.lp.primal().to_vec();
        let int_tol = self.opts.integrality_tol;

        // Most fractional integer column, ties to the lowest index.
        let mut best_col = NONE;
        let mut best_frac = int_tol;
        for &c in &self.relax.int_cols {
            let f = x[c] - x[c].floor();
            let dist = f.min(1.0 - f);
            if dist > best_frac {
                best_frac = dist;
                best_col = c;
            }
        }
        let snapshot = Arc::new(self.lp.snapshot());
        if best_col != NONE || self.sos_split(&x).is_some() {
            let mut cut = cutoff;
            for &rule in dives {
                if rule == DiveRule::Guided && guide.is_none() {
                    continue;
                }
                if let Some((obj, full)) = self.dive(&node.changes, &x, rule, guide, cut) {
                    cut = cut.min(obj);
                    found.push((obj, full));
                }
            }
            if !dives.is_empty() {
                self.lp.restore(&snapshot);
            }
        }
        if best_col != NONE {
            let v = x[best_col];
            let (lo, hi) = self.lp.col_bounds(best_col);
            let down = child(node, next_id(), obj, (best_col, lo, v.floor()), &snapshot);
            let up = child(node, next_id(), obj, (best_col, v.ceil(), hi), &snapshot);
            let preferred = if v - v.floor() >= 0.5 { 1 } else { 0 };
            return Outcome::Branch([down, up], preferred);
        }

        for set in &self.relax.sos {
            let vals: Vec<f64> = set
                .iter()
                .map(|m| match *m {
                    Member::Col(c) => x[c],
                    Member::Fixed(v) => v,
                })
                .collect();
            if let Some(split) = branch_sos2(&vals, self.opts.feasibility_tol) {
                let zero = |idx: &[usize]| -> Option<Vec<(usize, f64, f64)>> {
                    let mut ch = Vec::new();
                    for &k in idx {
                        match set[k] {
                            Member::Col(c) => ch.push((c, self.lp.col_bounds(c).0.min(0.0), 0.0)),
                            Member::Fixed(v) if v != 0.0 => return None,
                            Member::Fixed(_) => {}
                        }
                    }
                    Some(ch)
                };
                let mk = |ch: Option<Vec<(usize, f64, f64)>>, id: u64| -> Node {
                    match ch {
                        Some(ch) => {
                            let mut changes = node.changes.clone();
                            changes.extend(ch);
                            Node {
                                id,
                                parent: node.id,
                                bound: obj,
                                changes,
                                basis: Some(snapshot.clone()),
                            }
                        }
                        // Infeasible child: an unreachable bound.
                        None => Node {
                            id,
                            parent: node.id,
                            bound: f64::INFINITY,
                            changes: Vec::new(),
                            basis: None,
                        },
                    }
                };
                let left = mk(zero(&split.left_zero), next_id());
                let right = mk(zero(&split.right_zero), next_id());
                return Outcome::Branch([left, right], 0);
            }
        }

        // Integral and SOS2-feasible.
        let (obj, full) = self.polish(&node.changes, x);
        Outcome::Integral(obj, full)
    }

    /// Re-solves with the integer columns fixed at their rounded values and
    /// returns the objective and full assignment.
    fn polish(&mut self, changes: &[(usize, f64, f64)], x: Vec<f64>) -> (f64, Vec<f64>) {
        let mut fix = changes.to_vec();
        for &c in &self.relax.int_cols {
            let r = x[c].round();
            fix.push((c, r, r));
        }
        self.apply(&fix);
        self.lp.set_cutoff(None);
        let polished = if self.lp.solve() == LpStatus::Optimal {
            self.lp.primal().to_vec()
        } else {
            x
        };
        let mut full = self.relax.expand(&polished);
        for (j, v) in self.model.variables.iter().enumerate() {
            if v.kind.is_discrete() {
                full[j] = full[j].round();
            }
        }
        (self.model.objective_value(&full), full)
    }

    /// Fixes fractional columns one at a time, re-solving the LP after each
    /// fix, until the relaxation is integral (and SOS2-feasible) or the dive
    /// fails. Leaves the LP bounds as they were on entry.
    fn dive(
        &mut self,
        base: &[(usize, f64, f64)],
        start: &[f64],
        rule: DiveRule,
        guide: Option<&[f64]>,
        cutoff: f64,
    ) -> Option<(f64, Vec<f64>)> {
        let offset = self.relax.objective_offset;
        let mut changes = base.to_vec();
        let mut x = start.to_vec();
        let int_tol = self.opts.integrality_tol;
        let budget = self.lp.iterations() + DIVE_ITERATION_BUDGET;
        let found = loop {
            if self.lp.iterations() > budget {
                break None;
            }
            let mut pick: Option<(usize, f64, f64)> = None;
            let mut best = f64::NEG_INFINITY;
            for &c in &self.relax.int_cols {
                let f = x[c] - x[c].floor();
                if f.min(1.0 - f) <= int_tol {
                    continue;
                }
                let (score, up) = match rule {
                    DiveRule::Up => (f, true),
                    DiveRule::Fractional => (-(f.min(1.0 - f)), f >= 0.5),
                    DiveRule::Guided => {
                        let g = guide.map(|g| g[c]).unwrap_or(x[c].round());
                        (-(x[c] - g).abs(), g >= x[c])
                    }
                };
                if score > best {
                    best = score;
                    let (lo, hi) = self.lp.col_bounds(c);
                    pick = Some(if up {
                        (c, x[c].ceil(), hi)
                    } else {
                        (c, lo, x[c].floor())
                    });
                }
            }
            let fix: Vec<(usize, f64, f64)> = match pick {
                Some(p) => vec![p],
                None => match self.sos_split(&x) {
                    Some((left, right)) => {
                        if left.len() <= right.len() { left } else { right }
                    }
                    None => {
                        let (obj, full) = self.polish(&changes, x);
                        break Some((obj, full));
                    }
                },
            };
            let mark = changes.len();
            changes.extend(fix.iter().copied());
            self.apply(&changes);
            self.lp.set_cutoff(cutoff.is_finite().then_some(cutoff - offset));
            let mut status = self.lp.solve();
            if status != LpStatus::Optimal && fix.len() == 1 {
                // Try the other side once.
                let (c, lo, hi) = fix[0];
                let (bl, bu) = (self.relax.lp.col_lower[c], self.relax.lp.col_upper[c]);
                let other = if lo > bl { (c, bl, lo - 1.0) } else { (c, hi + 1.0, bu) };
                changes.truncate(mark);
                changes.push(other);
                self.apply(&changes);
                status = self.lp.solve();
            }
            if status != LpStatus::Optimal {
                break None;
            }
            x = self.lp.primal().to_vec();
            if self.lp.objective() + offset >= cutoff {
                break None;
            }
        };
        self.apply(base);
        found
    }

    /// Column bound changes for the two sides of the first violated SOS2
    /// set, if any.
    #[allow(clippy::type_complexity)]
    fn sos_split(&self, x: &[f64]) -> Option<(Vec<(usize, f64, f64)>, Vec<(usize, f64, f64)>)> {
        for set in &self.relax.sos {
            let vals: Vec<f64> = set
                .iter()
                .map(|m| match *m {
                    Member::Col(c) => x[c],
                    Member::Fixed(v) => v,
                })
                .collect();
            if let Some(split) = branch_sos2(&vals, self.opts.feasibility_tol) {
                let zero = |idx: &[usize]| -> Vec<(usize, f64, f64)> {
                    idx.iter()
                        .filter_map(|&k| match set[k] {
                            Member::Col(c) => Some((c, self.lp.col_bounds(c).0.min(0.0), 0.0)),
                            Member::Fixed(_) => None,
                        })
                        .collect()
                };
                return Some((zero(&split.left_zero), zero(&split.right_zero)));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DiveRule {
    /// Round up the column with the largest fractional part.
    Up,
    /// Round the column nearest to integrality.
    Fractional,
    /// Move the column farthest toward the incumbent value.
    Guided,
}

const DIVE_ITERATION_BUDGET: usize = 50_000;

fn child(parent: &Node, id: u64, bound: f64, change: (usize, f64, f64), basis: &Arc<BasisSnapshot>) -> Node {
    let mut changes = parent.changes.clone();
    changes.push(change);
    Node {
        id,
        parent: parent.id,
        bound,
        changes,
        basis: Some(basis.clone()),
    }
}

struct Shared {
    heap: BinaryHeap<Queued>,
    incumbent: Option<(f64, Vec<f64>)>,
    active: usize,
    nodes: usize,
    next_id: u64,
    stop: Option<SolveStatus>,
    unbounded: bool,
    /// Bounds of nodes currently being evaluated (for the global bound).
    in_flight: Vec<(u64, f64)>,
}

impl Shared {
    fn cutoff(&self, opts: &MilpOptions) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - (opts.gap * obj.abs()).max(opts.abs_gap),
            None => f64::INFINITY,
        }
    }
}

/// Branch and bound over `model`.
pub fn solve_milp(model: &MilpModel, opts: &MilpOptions) -> SolveResult {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|t| start + t);
    let finish = |status, incumbent: Option<(f64, Vec<f64>)>, bound: f64, nodes, iters| {
        let (objective, values) = match incumbent {
            Some((o, v)) => (Some(o), Some(v)),
            None => (None, None),
        };
        let gap = match objective {
            Some(o) => ((o - bound) / o.abs().max(1.0)).max(0.0),
            None => f64::INFINITY,
        };
        SolveResult {
            status,
            objective,
            values,
            best_bound: bound,
            gap,
            nodes,
            lp_iterations: iters,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    };

    let Some(relax) = Relaxation::build(model, opts.feasibility_tol) else {
        return finish(SolveStatus::Infeasible, None, f64::INFINITY, 0, 0);
    };

    let tol = Tolerances {
        feasibility: opts.feasibility_tol.max(1e-6),
        relative_feasibility: 1e-6,
        integrality: opts.integrality_tol,
    };
    let mut incumbent = None;
    if let Some(x0) = &opts.initial_solution {
        if x0.len() == model.variables.len() && model.check(x0, &tol).feasible {
            incumbent = Some((model.objective_value(x0), x0.clone()));
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Queued(Node {
        id: 0,
        parent: u64::MAX,
        bound: f64::NEG_INFINITY,
        changes: Vec::new(),
        basis: None,
    }));
    let shared = Mutex::new(Shared {
        heap,
        incumbent,
        active: 0,
        nodes: 0,
        next_id: 1,
        stop: None,
        unbounded: false,
        in_flight: Vec::new(),
    });
    let cv = Condvar::new();
    let threads = opts.threads.max(1);
    let iterations = Mutex::new(0usize);

    let run = || {
        let mut worker = Worker::new(&relax, model, opts, deadline);
        let mut dive: Option<Node> = None;
        loop {
            // Acquire a node.
            let (node, continuing, cutoff, dives, guide) = {
                let mut g = shared.lock().unwrap();
                loop {
                    if g.stop.is_some() {
                        break;
                    }
                    if let Some(dl) = deadline {
                        if Instant::now() >= dl {
                            g.stop = Some(SolveStatus::TimeLimit);
                            break;
                        }
                    }
                    if let Some(limit) = opts.node_limit {
                        if g.nodes >= limit {
                            g.stop = Some(SolveStatus::NodeLimit);
                            break;
                        }
                    }
                    let cutoff = g.cutoff(opts);
                    if let Some(d) = dive.take() {
                        if d.bound < cutoff {
                            dive = Some(d);
                            break;
                        }
                        continue;
                    }
                    match g.heap.pop() {
                        Some(Queued(n)) if n.bound >= cutoff => continue,
                        Some(Queued(n)) => {
                            dive = Some(n);
                            break;
                        }
                        None if g.active == 0 => break,
                        None => g = cv.wait(g).unwrap(),
                    }
                }
                if g.stop.is_some() {
                    if let Some(d) = dive.take() {
                        g.heap.push(Queued(d));
                    }
                    cv.notify_all();
                    break;
                }
                let Some(node) = dive.take() else {
                    cv.notify_all();
                    break;
                };
                g.active += 1;
                g.nodes += 1;
                g.in_flight.push((node.id, node.bound));
                let cutoff = g.cutoff(opts);
                let continuing = worker.last_parent == Some(node.parent);
                let dives: &[DiveRule] = if opts.dive_every == 0 {
                    &[]
                } else if node.id == 0 {
                    &[DiveRule::Up, DiveRule::Fractional]
                } else if g.nodes % opts.dive_every == 0 {
                    match (g.nodes / opts.dive_every) % 3 {
                        0 => &[DiveRule::Up],
                        1 => &[DiveRule::Guided],
                        _ => &[DiveRule::Fractional],
                    }
                } else {
                    &[]
                };
                let guide = if dives.contains(&DiveRule::Guided) {
                    g.incumbent.as_ref().map(|(_, x)| relax.project(x))
                } else {
                    None
                };
                (node, continuing, cutoff, dives, guide)
            };

            let mut ids = Vec::new();
            let mut found = Vec::new();
            let outcome = {
                let mut take_id = || {
                    let mut g = shared.lock().unwrap();
                    let id = g.next_id;
                    g.next_id += 1;
                    ids.push(id);
                    id
                };
                worker.evaluate(&node, continuing, cutoff, dives, guide.as_deref(), &mut found, &mut take_id)
            };
            worker.last_parent = match outcome {
                Outcome::Branch(..) => Some(node.id),
                _ => None,
            };

            let mut g = shared.lock().unwrap();
            for (obj, x) in found {
                let better = g.incumbent.as_ref().is_none_or(|(o, _)| obj < *o);
                if better && model.check(&x, &tol).feasible {
                    g.incumbent = Some((obj, x));
                }
            }
            g.active -= 1;
            g.in_flight.retain(|e| e.0 != node.id);
            match outcome {
                Outcome::Pruned => {}
                Outcome::Unbounded => {
                    g.unbounded = true;
                    g.stop = Some(SolveStatus::Unbounded);
                }
                Outcome::Limit => {
                    g.heap.push(Queued(node));
                    g.stop = Some(SolveStatus::TimeLimit);
                }
                Outcome::Integral(obj, x) => {
                    let better = g.incumbent.as_ref().is_none_or(|(o, _)| obj < *o);
                    if better && model.check(&x, &tol).feasible {
                        g.incumbent = Some((obj, x));
                    }
                }
                Outcome::Branch(children, preferred) => {
                    let [a, b] = children;
                    let (first, second) = if preferred == 0 { (a, b) } else { (b, a) };
                    let plunge = g.incumbent.is_none();
                    if plunge {
                        dive = Some(first);
                        g.heap.push(Queued(second));
                    } else {
                        g.heap.push(Queued(first));
                        g.heap.push(Queued(second));
                    }
                }
            }
            cv.notify_all();
        }
        *iterations.lock().unwrap() += worker.lp.iterations();
    };

    if threads == 1 {
        run();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(&run);
            }
        });
    }

    let g = shared.into_inner().unwrap();
    let iters = iterations.into_inner().unwrap();
    if g.unbounded {
        return finish(SolveStatus::Unbounded, None, f64::NEG_INFINITY, g.nodes, iters);
    }
    let open_bound = g
        .heap
        .iter()
        .map(|q| q.0.bound)
        .chain(g.in_flight.iter().map(|e| e.1))
        .fold(f64::INFINITY, f64::min);
    match g.stop {
        Some(status) => {
            let bound = match &g.incumbent {
                Some((o, _)) => open_bound.min(*o),
                None => open_bound,
            };
            finish(status, g.incumbent, bound, g.nodes, iters)
        }
        None => match g.incumbent {
            Some((o, x)) => {
                let status = if opts.gap <= DEFAULT_GAP {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::GapLimit
                };
                let cut = o - (opts.gap * o.abs()).max(opts.abs_gap);
                let bound = open_bound.min(o).max(cut.min(o));
                finish(status, Some((o, x)), bound, g.nodes, iters)
            }
            None => finish(SolveStatus::Infeasible, None, f64::INFINITY, g.nodes, iters),
        },
    }
}

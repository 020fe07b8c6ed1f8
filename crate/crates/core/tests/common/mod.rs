//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use spacelog_core::milp::{MilpModel, Provenance, Relation, VarKind};
use spacelog_core::solver::LpProblem;

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn for_each_subset(k: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(k: usize, n: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(k, n, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(k, n, 0, &mut Vec::new(), f);
}

/// Minimum objective over the vertices of a bounded LP, `None` if empty.
/// Every column must have finite bounds.
pub fn vertex_min(p: &LpProblem) -> Option<f64> {
    let n = p.num_cols();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), p.col_lower[j]));
        planes.push((e, p.col_upper[j]));
    }
    for i in 0..p.num_rows() {
        let mut coef = vec![0.0; n];
        for (j, a) in p.row(i) {
            coef[j] = a;
        }
        for bound in [p.row_lower[i], p.row_upper[i]] {
            if bound.is_finite() {
                planes.push((coef.clone(), bound));
            }
        }
    }
    let mut best: Option<f64> = None;
    for_each_subset(n, planes.len(), &mut |combo| {
        let a = combo.iter().map(|&k| planes[k].0.clone()).collect();
        let b = combo.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if p.max_violation(&x) <= 1e-7 {
                let obj = p.objective(&x);
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
    });
    best
}

/// Random boxed LP with small integer data.
pub fn random_lp(rng: &mut impl Rng, max_cols: usize, max_rows: usize) -> LpProblem {
    let n = rng.gen_range(1..=max_cols);
    let m = rng.gen_range(1..=max_rows);
    let mut p = LpProblem::new();
    for _ in 0..n {
        let lo = rng.gen_range(-3..=0) as f64;
        let w = rng.gen_range(0..=5) as f64;
        p.add_col(rng.gen_range(-5..=5) as f64, lo, lo + w);
    }
    for _ in 0..m {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                terms.push((j, rng.gen_range(-4..=4) as f64));
            }
        }
        let b = rng.gen_range(-6..=6) as f64;
        let (l, u) = match rng.gen_range(0..3) {
            0 => (b, f64::INFINITY),
            1 => (f64::NEG_INFINITY, b),
            _ => (b, b + rng.gen_range(0..=4) as f64),
        };
        p.add_row(&terms, l, u);
    }
    p
}

/// Random pure-binary MILP: objective and rows with small integer data.
pub fn random_binary_milp(rng: &mut impl Rng, n: usize, m: usize) -> MilpModel {
    let mut model = MilpModel::new("random");
    let vars: Vec<usize> = (0..n)
        .map(|j| model.add_var(format!("b{j}"), VarKind::Binary, 0.0, 1.0, Provenance::Free))
        .collect();
    let obj: Vec<(usize, f64)> = vars.iter().map(|&v| (v, rng.gen_range(-10..=10) as f64)).collect();
    model.set_objective(&obj);
    // Rows are drawn around a hidden binary point so most instances are
    // feasible; a few rows get a shifted rhs to produce infeasible ones.
    let hidden: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    for i in 0..m {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.4) {
                terms.push((v, rng.gen_range(-6..=9) as f64));
            }
        }
        let act: f64 = terms.iter().map(|&(v, a)| a * hidden[v]).sum();
        let slack = if rng.gen_bool(0.03) { -3.0 } else { rng.gen_range(0..=4) as f64 };
        let (relation, rhs) = match rng.gen_range(0..10) {
            0 => (Relation::Eq, act),
            1..=3 => (Relation::Ge, act - slack),
            _ => (Relation::Le, act + slack),
        };
        model.add_constraint(format!("r{i}"), "row", &terms, relation, rhs);
    }
    model
}

/// Exhaustive minimum of a pure-binary model (Gray-code walk).
pub fn enumerate_binary(model: &MilpModel) -> Option<f64> {
    let n = model.num_vars();
    let mut x = vec![0.0; n];
    let cols: Vec<Vec<(usize, f64)>> = {
        let mut cols = vec![Vec::new(); n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                cols[v].push((i, a));
            }
        }
        cols
    };
    let mut act = vec![0.0; model.constraints.len()];
    let mut obj = 0.0;
    let cost: Vec<f64> = {
        let mut c = vec![0.0; n];
        for &(v, a) in &model.objective {
            c[v] += a;
        }
        c
    };
    let feasible = |act: &[f64]| {
        model.constraints.iter().zip(act).all(|(c, &a)| match c.relation {
            Relation::Le => a <= c.rhs + 1e-9,
            Relation::Ge => a >= c.rhs - 1e-9,
            Relation::Eq => (a - c.rhs).abs() <= 1e-9,
        })
    };
    let mut best = if feasible(&act) { Some(obj) } else { None };
    for step in 1u64..(1u64 << n) {
        let j = step.trailing_zeros() as usize;
        let delta = if x[j] == 0.0 { 1.0 } else { -1.0 };
        x[j] += delta;
        obj += delta * cost[j];
        for &(i, a) in &cols[j] {
            act[i] += delta * a;
        }
        if feasible(&act) && best.is_none_or(|b| obj < b) {
            best = Some(obj);
        }
    }
    best
}

/// Minimizes `y - 3x` with `y = x^2` modeled by an SOS2 set over the
/// breakpoints 0..=4 and `x <= bound`.
pub fn pwl_square(bound: f64) -> MilpModel {
    let mut m = MilpModel::new("sq");
    let w: Vec<usize> = (0..5)
        .map(|k| m.add_var(format!("w{k}"), VarKind::Continuous, 0.0, 1.0, Provenance::Free))
        .collect();
    let x = m.add_var("x", VarKind::Continuous, 0.0, bound, Provenance::Free);
    let y = m.add_var("y", VarKind::Continuous, 0.0, 100.0, Provenance::Free);
    let ones: Vec<_> = w.iter().map(|&v| (v, 1.0)).collect();
    m.add_constraint("convex", "sos", &ones, Relation::Eq, 1.0);
    let mut xs: Vec<_> = w.iter().enumerate().map(|(k, &v)| (v, k as f64)).collect();
    xs.push((x, -1.0));
    m.add_constraint("x_link", "sos", &xs, Relation::Eq, 0.0);
    let mut ys: Vec<_> = w.iter().enumerate().map(|(k, &v)| (v, (k * k) as f64)).collect();
    ys.push((y, -1.0));
    m.add_constraint("y_link", "sos", &ys, Relation::Eq, 0.0);
    m.add_sos2("curve", w);
    m.set_objective(&[(y, 1.0), (x, -3.0)]);
    m
}

//! Branch and bound against exhaustive enumeration and hand-solved cases.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacelog_core::milp::{MilpModel, Provenance, Relation, VarKind};
use spacelog_core::solver::{branch_sos2, solve_lp, solve_milp, LpStatus, MilpOptions, SolveStatus};

fn opts() -> MilpOptions {
    MilpOptions::default()
}

#[test]
fn rounds_integer_up() {
    let mut m = MilpModel::new("t");
    let x = m.add_var("x", VarKind::Integer, 0.0, 100.0, Provenance::Free);
    m.add_constraint("lb", "row", &[(x, 1.0)], Relation::Ge, 2.5);
    m.set_objective(&[(x, 1.0)]);
    let r = solve_milp(&m, &opts());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(r.objective, Some(3.0));
}

#[test]
fn two_binaries_with_shared_capacity() {
    let mut m = MilpModel::new("t");
    let x = m.add_var("x", VarKind::Binary, 0.0, 1.0, Provenance::Free);
    let y = m.add_var("y", VarKind::Binary, 0.0, 1.0, Provenance::Free);
    m.add_constraint("cap", "row", &[(x, 1.0), (y, 1.0)], Relation::Le, 1.5);
    m.set_objective(&[(x, -1.0), (y, -1.0)]);
    let r = solve_milp(&m, &opts());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(r.objective, Some(-1.0));
}

#[test]
fn infeasible_and_unbounded_models() {
    let mut m = MilpModel::new("t");
    let x = m.add_var("x", VarKind::Integer, 0.0, 10.0, Provenance::Free);
    m.add_constraint("a", "row", &[(x, 2.0)], Relation::Eq, 3.0);
    assert_eq!(solve_milp(&m, &opts()).status, SolveStatus::Infeasible);

    let mut u = MilpModel::new("u");
    let x = u.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, Provenance::Free);
    let b = u.add_var("b", VarKind::Binary, 0.0, 1.0, Provenance::Free);
    u.add_constraint("a", "row", &[(x, 1.0), (b, -1.0)], Relation::Ge, 0.0);
    u.set_objective(&[(x, -1.0)]);
    assert_eq!(solve_milp(&u, &opts()).status, SolveStatus::Unbounded);
}

#[test]
fn lp_relaxation_examples() {
    let mut m = MilpModel::new("t");
    let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, Provenance::Free);
    let y = m.add_var("y", VarKind::Continuous, 0.0, f64::INFINITY, Provenance::Free);
    m.add_constraint("c", "row", &[(x, 1.0), (y, 2.0)], Relation::Ge, 2.0);
    m.set_objective(&[(x, 1.0), (y, 1.0)]);
    let s = solve_lp(&m);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective.unwrap() - 1.0).abs() < 1e-9);
    let v = s.values.unwrap();
    assert!(v[x].abs() < 1e-9 && (v[y] - 1.0).abs() < 1e-9);
}

#[test]
fn random_binary_models_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for case in 0..50 {
        let n = rng.gen_range(4..=20);
        let rows = rng.gen_range(1..=30);
        let model = common::random_binary_milp(&mut rng, n, rows);
        let expected = common::enumerate_binary(&model);
        let r = solve_milp(&model, &opts());
        match expected {
            None => assert_eq!(r.status, SolveStatus::Infeasible, "case {case}"),
            Some(best) => {
                assert_eq!(r.status, SolveStatus::Optimal, "case {case}");
                assert!((r.objective.unwrap() - best).abs() < 1e-6, "case {case}: {:?} vs {best}", r.objective);
                let x = r.values.unwrap();
                assert!(model.check(&x, &Default::default()).feasible);
                feasible += 1;
            }
        }
    }
    assert!(feasible >= 25, "generator should mostly produce feasible models");
}

#[test]
fn root_relaxation_bounds_milp_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let model = common::random_binary_milp(&mut rng, 10, 8);
        let lp = solve_lp(&model);
        let r = solve_milp(&model, &opts());
        if let (Some(lb), Some(opt)) = (lp.objective, r.objective) {
            assert!(lb <= opt + 1e-9);
        }
    }
}

#[test]
fn single_thread_mode_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let model = common::random_binary_milp(&mut rng, 16, 12);
        let a = solve_milp(&model, &opts());
        let b = solve_milp(&model, &opts());
        assert_eq!(a.status, b.status);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.lp_iterations, b.lp_iterations);
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn parallel_mode_matches_single_thread_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let model = common::random_binary_milp(&mut rng, 16, 12);
        let a = solve_milp(&model, &opts());
        let b = solve_milp(&model, &MilpOptions { threads: 3, ..opts() });
        assert_eq!(a.status, b.status);
        if let (Some(x), Some(y)) = (a.objective, b.objective) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
        }
    }
}

#[test]
fn sos2_split_examples() {
    let s = branch_sos2(&[0.5, 0.0, 0.5], 1e-9).unwrap();
    assert_eq!(s.split, 2);
    assert_eq!(s.left_zero, vec![2]);
    assert_eq!(s.right_zero, vec![0]);
    assert!(branch_sos2(&[0.0, 0.4, 0.6], 1e-9).is_none());
    assert!(branch_sos2(&[1.0, 0.0, 0.0], 1e-9).is_none());
}

/// Piecewise-linear y^2 over breakpoints {0, 2, 4}: at y = 3 the chord gives 10.
#[test]
fn pwl_square_via_sos2() {
    let mut m = MilpModel::new("pwl");
    let lam: Vec<usize> = (0..3)
        .map(|k| m.add_var(format!("l{k}"), VarKind::Continuous, 0.0, 1.0, Provenance::Free))
        .collect();
    let y_in = m.add_var("y_in", VarKind::Continuous, 0.0, 10.0, Provenance::Free);
    let y_out = m.add_var("y_out", VarKind::Continuous, 0.0, 100.0, Provenance::Free);
    let d = [0.0, 2.0, 4.0];
    let g = [0.0, 4.0, 16.0];
    m.add_constraint("conv", "pwl", &lam.iter().map(|&l| (l, 1.0)).collect::<Vec<_>>(), Relation::Eq, 1.0);
    let mut t: Vec<(usize, f64)> = lam.iter().zip(d).map(|(&l, v)| (l, v)).collect();
    t.push((y_in, -1.0));
    m.add_constraint("arg", "pwl", &t, Relation::Eq, 0.0);
    let mut t: Vec<(usize, f64)> = lam.iter().zip(g).map(|(&l, v)| (l, v)).collect();
    t.push((y_out, -1.0));
    m.add_constraint("val", "pwl", &t, Relation::Eq, 0.0);
    m.add_constraint("fix", "side", &[(y_in, 1.0)], Relation::Eq, 3.0);
    m.add_sos2("s", lam.clone());
    // Maximizing y_out makes the LP relaxation prefer the outer breakpoints.
    m.set_objective(&[(y_out, -1.0)]);
    let r = solve_milp(&m, &opts());
    assert_eq!(r.status, SolveStatus::Optimal);
    let x = r.values.unwrap();
    assert!((x[y_out] - 10.0).abs() < 1e-7, "{}", x[y_out]);
    assert!(r.nodes <= 3, "one SOS2 branch: {} nodes", r.nodes);
    assert!(m.sos2[0].is_satisfied(&x, 1e-9));
}

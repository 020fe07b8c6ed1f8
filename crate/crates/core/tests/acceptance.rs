//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 2 5`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacelog_core::cislunar::*;
use spacelog_core::milp::Tolerances;
use spacelog_core::solver::{solve_milp, LpStatus, MilpOptions, SimplexOptions, SimplexSolver, SolveStatus};
use spacelog_core::traj::{
    rocket_mass_ratio, CrewStage, FitRegistry, MassModel, Propulsion, PwlCurve, TofModel,
};

const BASELINE_KG: f64 = 372_671.0;
const BASELINE_REL_TOL: f64 = 0.005;
const BASELINE_LIMIT: Duration = Duration::from_secs(60);
const POINT_A_KG: f64 = 334_727.0;
const POINT_A_OBJ_TOL_KG: f64 = 500.0;
const POINT_A_CARGO_DAYS: f64 = 104.0;
const POINT_A_DOMINANCE: f64 = 1.01;
const POINT_A_SOLVE_LIMIT: Duration = Duration::from_secs(120);
const CORNER_SAVINGS: f64 = 0.13;
const SWEEP_LIMIT: Duration = Duration::from_secs(30 * 60);
const SWEEP_POINT_LIMIT: Duration = Duration::from_secs(80);
const MONOTONE_REL_TOL: f64 = 1e-6;
const LP_REL_TOL: f64 = 1e-6;
const SURROGATE_REL_TOL: f64 = 1e-9;

const FIXTURE: &str = include_str!("fixtures/point_a_plan.csv");

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn registry() -> FitRegistry {
    FitRegistry::load_embedded().expect("embedded data")
}

/// Returned solutions must satisfy the model including SOS2 adjacency.
fn solution_is_feasible(c: &Campaign, x: &[f64]) -> bool {
    let r = c.model.check(x, &Tolerances::default());
    r.feasible && r.sos2_violations.is_empty()
}

fn baseline() -> Outcome {
    let reg = registry();
    let mut cfg = CampaignConfig::default();
    cfg.solver.time_limit_s = Some(BASELINE_LIMIT.as_secs_f64());
    let c = build_campaign(&cfg, &reg).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let s = solve_campaign(&c, &cfg.solver.options(), &cfg.solver.screening);
    let elapsed = start.elapsed();
    let obj = s.result.objective.ok_or(format!("status {:?}", s.result.status))?;
    let rel = (obj - BASELINE_KG) / BASELINE_KG;
    let feasible = solution_is_feasible(&c, s.result.values.as_deref().unwrap_or(&[]));
    check(
        rel.abs() <= BASELINE_REL_TOL && elapsed <= BASELINE_LIMIT && feasible,
        format!("objective {obj:.1} kg ({:+.3}%), {:.1} s, feasible {feasible}", rel * 100.0, elapsed.as_secs_f64()),
    )
}

fn point_a_config() -> CampaignConfig {
    CampaignConfig {
        cargo_days: 120.0,
        crew_days: 30.0,
        gravity: 9.81,
        ..Default::default()
    }
}

fn replay() -> Outcome {
    let c = build_campaign(&point_a_config(), &registry()).map_err(|e| e.to_string())?;
    let plan = FlowPlan::from_csv(FIXTURE).map_err(|e| e.to_string())?;
    let a = validate_plan(&plan, &c, PLAN_TOLERANCE).map_err(|e| e.to_string())?;
    check(
        a.feasible
            && a.max_row_violation <= PLAN_TOLERANCE
            && (a.objective_kg - POINT_A_KG).abs() <= POINT_A_OBJ_TOL_KG
            && (a.cargo_days - POINT_A_CARGO_DAYS).abs() <= 1.0
            && a.crew_days == 30.0,
        format!(
            "max residual {:.3} kg, objective {:.1} kg, cargo {:.2} d, crew {} d",
            a.max_row_violation, a.objective_kg, a.cargo_days, a.crew_days
        ),
    )
}

fn dominance() -> Outcome {
    let mut cfg = point_a_config();
    cfg.solver.time_limit_s = Some(POINT_A_SOLVE_LIMIT.as_secs_f64());
    let c = build_campaign(&cfg, &registry()).map_err(|e| e.to_string())?;
    let s = solve_campaign(&c, &cfg.solver.options(), &cfg.solver.screening);
    let obj = s.result.objective.ok_or(format!("status {:?}", s.result.status))?;
    let feasible = solution_is_feasible(&c, s.result.values.as_deref().unwrap_or(&[]));
    check(
        obj <= POINT_A_KG * POINT_A_DOMINANCE && feasible,
        format!("objective {obj:.1} kg, limit {:.1} kg, feasible {feasible}", POINT_A_KG * POINT_A_DOMINANCE),
    )
}

fn sweep() -> Outcome {
    let reg = registry();
    let mut base = CampaignConfig {
        gravity: 9.81,
        ..Default::default()
    };
    base.solver.time_limit_s = Some(SWEEP_POINT_LIMIT.as_secs_f64());
    let grid = sorted_grid(&[0.0, 120.0, 240.0, 360.0, 480.0], &[21.0, 30.0, 40.0, 50.0]);
    let start = Instant::now();
    let report = pareto_sweep(&base, &reg, &grid, |p| {
        eprintln!(
            "  sweep ({:>3}, {:>2}): {:?} {:?} in {:.1} s",
            p.cargo_days, p.crew_days, p.status, p.objective_kg, p.wall_time_s
        );
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let pts = &report.points;
    let obj = |g: f64, w: f64| {
        pts.iter()
            .find(|p| p.cargo_days == g && p.crew_days == w)
            .and_then(|p| p.objective_kg)
    };
    let mut monotone = true;
    for p in pts {
        for q in pts {
            if p.cargo_days >= q.cargo_days && p.crew_days >= q.crew_days {
                match (p.objective_kg, q.objective_kg) {
                    (Some(a), Some(b)) => monotone &= a <= b * (1.0 + MONOTONE_REL_TOL),
                    (None, Some(_)) => monotone = false,
                    _ => {}
                }
            }
        }
    }
    let (Some(base_kg), Some(corner_kg)) = (obj(0.0, 21.0), obj(480.0, 50.0)) else {
        return Err("baseline or corner point unsolved".into());
    };
    let savings = 1.0 - corner_kg / base_kg;
    let electric: Vec<String> =
        tug_units(&reg).into_iter().filter(|t| t.propulsion == Propulsion::Electric).map(|t| t.name).collect();
    let template = build_campaign(&base, &reg).map_err(|e| e.to_string())?;
    let sep_used = pts.iter().filter(|p| p.cargo_days >= 240.0 && p.crew_days == 50.0).any(|p| {
        p.plan.as_ref().is_some_and(|plan| {
            tug_departures(&template, plan).iter().any(|(name, &n)| n > 0 && electric.contains(name))
        })
    });
    check(
        monotone && savings >= CORNER_SAVINGS && elapsed <= SWEEP_LIMIT && sep_used,
        format!(
            "monotone {monotone}, corner savings {:.2}%, SEP at (>=240, 50) {sep_used}, {:.0} s for {} points",
            savings * 100.0,
            elapsed.as_secs_f64(),
            pts.len()
        ),
    )
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut milp_ok = 0;
    for _ in 0..50 {
        let n = rng.gen_range(4..=20);
        let rows = rng.gen_range(1..=30);
        let m = common::random_binary_milp(&mut rng, n, rows);
        let r = solve_milp(&m, &MilpOptions::default());
        let agree = match common::enumerate_binary(&m) {
            None => r.status == SolveStatus::Infeasible,
            Some(best) => r.status == SolveStatus::Optimal && r.objective == Some(best),
        };
        milp_ok += agree as usize;
    }
    let mut lp_ok = 0;
    for _ in 0..100 {
        let p = common::random_lp(&mut rng, 10, 6);
        let mut s = SimplexSolver::new(&p, SimplexOptions::default());
        let status = s.solve();
        let agree = match common::vertex_min(&p) {
            None => status == LpStatus::Infeasible,
            Some(best) => {
                status == LpStatus::Optimal && (s.objective() - best).abs() <= LP_REL_TOL * best.abs().max(1.0)
            }
        };
        lp_ok += agree as usize;
    }
    check(milp_ok == 50 && lp_ok == 100, format!("MILP {milp_ok}/50, LP {lp_ok}/100"))
}

fn surrogates() -> Outcome {
    let reg = registry();
    let closed = |dv: f64, isp: f64| (-dv * 1000.0 / (9.80665 * isp)).exp();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for (_, leg) in reg.cp_rows() {
        let r = rocket_mass_ratio(leg.dv_km_s, 450.0).map_err(|e| e.to_string())?;
        worst = worst.max((r / closed(leg.dv_km_s, 450.0) - 1.0).abs());
        rows += 1;
    }
    for (_, leg) in reg.crew_rows() {
        let isp = match leg.stage {
            CrewStage::UpperStage => reg.crew_vehicles.upper_stage_isp_s,
            CrewStage::CommandModule => reg.crew_vehicles.csm.isp_s,
        };
        let r = rocket_mass_ratio(leg.dv_km_s, isp).map_err(|e| e.to_string())?;
        worst = worst.max((r / closed(leg.dv_km_s, isp) - 1.0).abs());
        rows += 1;
    }

    // every SEP arc of the campaign carries the table coefficients verbatim
    let c = build_campaign(&CampaignConfig::default(), &reg).map_err(|e| e.to_string())?;
    let mut sep_mismatch = 0;
    for arc in &c.network.transport {
        let Some(t) = c.tugs.iter().find(|t| t.name == arc.key.vehicle && t.propulsion == Propulsion::Electric)
        else {
            continue;
        };
        let label = |n: &str| match n {
            "EML1" => "L1".to_string(),
            "EML2" => "L2".to_string(),
            n => n.to_string(),
        };
        let fit = reg
            .sep(&format!("{} to {}", label(&arc.key.origin), label(&arc.key.destination)), t.family_index)
            .map_err(|e| e.to_string())?;
        let mass_ok = arc.mass
            == Some(MassModel::Affine {
                ratio: fit.mass_slope,
                offset_kg: fit.mass_offset_t * 1000.0,
            });
        let tof_ok = arc.tof
            == Some(TofModel::Affine {
                days_per_kg: fit.days_per_t / 1000.0,
                base_days: fit.base_days,
            });
        sep_mismatch += !(mass_ok && tof_ok) as usize;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let knots: Vec<f64> = (0..7).map(|k| k as f64 * 1.5 + if k > 0 { 0.25 } else { 0.0 }).collect();
    let values: Vec<f64> = knots.iter().map(|x: &f64| (x * 0.7).sin() * 40.0).collect();
    let curve = PwlCurve::new(knots.clone(), values.clone()).map_err(|e| e.to_string())?;
    let mut pwl_worst: f64 = 0.0;
    for (x, y) in knots.iter().zip(&values) {
        pwl_worst = pwl_worst.max((curve.eval(*x).unwrap_or(f64::NAN) - y).abs());
    }
    for _ in 0..100 {
        let x = rng.gen_range(knots[0]..=knots[knots.len() - 1]);
        let k = (1..knots.len()).find(|&k| x <= knots[k]).unwrap_or(knots.len() - 1);
        let chord = values[k - 1] + (values[k] - values[k - 1]) * (x - knots[k - 1]) / (knots[k] - knots[k - 1]);
        let err = (curve.eval(x).unwrap_or(f64::NAN) - chord).abs() / chord.abs().max(1.0);
        pwl_worst = pwl_worst.max(err);
    }
    check(
        worst <= SURROGATE_REL_TOL && rows == 17 && sep_mismatch == 0 && pwl_worst <= SURROGATE_REL_TOL,
        format!(
            "rocket rows {rows} worst rel {worst:.1e}, SEP mismatches {sep_mismatch}, PWL worst {pwl_worst:.1e}"
        ),
    )
}

fn properties() -> Outcome {
    let reg = registry();
    let c = build_campaign(&CampaignConfig::default(), &reg).map_err(|e| e.to_string())?;
    let acyclic = (0..c.network.num_layers()).all(|l| c.network.topological_order(l).is_some());
    let reuse = c.tugs.iter().all(|t| {
        let mut layers: Vec<usize> = c
            .network
            .transport
            .iter()
            .filter(|a| a.key.vehicle == t.name && a.key.origin == t.parking_orbit())
            .map(|a| a.key.layer)
            .collect();
        layers.dedup();
        layers.len() <= 3
    });
    let exclusions = campaign_multigraph_issues(&c).is_empty();

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut monotone = true;
    let mut sos2 = true;
    for _ in 0..30 {
        let tight = common::random_binary_milp(&mut rng, 10, 8);
        let mut loose = tight.clone();
        for row in &mut loose.constraints {
            row.rhs += match row.relation {
                spacelog_core::milp::Relation::Le => 2.0,
                spacelog_core::milp::Relation::Ge => -2.0,
                spacelog_core::milp::Relation::Eq => 0.0,
            };
        }
        let (a, b) = (solve_milp(&tight, &MilpOptions::default()), solve_milp(&loose, &MilpOptions::default()));
        if let (Some(x), Some(y)) = (a.objective, b.objective) {
            monotone &= y <= x;
        }
        monotone &= !(a.objective.is_some() && b.objective.is_none());
    }
    for bound in [0.5, 1.0, 2.5, 4.0] {
        let m = common::pwl_square(bound);
        let r = solve_milp(&m, &MilpOptions::default());
        sos2 &= r.values.is_some_and(|x| m.sos2.iter().all(|s| s.is_satisfied(&x, 1e-7)));
    }
    check(
        acyclic && reuse && exclusions && monotone && sos2,
        format!("acyclic {acyclic}, reuse<=3 {reuse}, exclusions {exclusions}, monotone {monotone}, SOS2 {sos2}"),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("baseline reproduction", baseline),
        ("point A replay", replay),
        ("point A dominance", dominance),
        ("pareto shape", sweep),
        ("solver oracle equivalence", oracles),
        ("surrogate correctness", surrogates),
        ("property suite", properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Structural properties of the assembled cislunar campaign and replay of a
//! known plan.

mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spacelog_core::cislunar::*;
use spacelog_core::milp::{Relation, Tolerances};
use spacelog_core::netgraph::LayerTag;
use spacelog_core::solver::{solve_milp, MilpOptions, SolveStatus};
use spacelog_core::traj::FitRegistry;

const FIXTURE: &str = include_str!("fixtures/point_a_plan.csv");

fn point_a(reg: &FitRegistry) -> Campaign {
    let cfg = CampaignConfig {
        cargo_days: 120.0,
        crew_days: 30.0,
        gravity: 9.81,
        ..Default::default()
    };
    build_campaign(&cfg, reg).unwrap()
}

#[test]
fn fixture_plan_replays_within_rounding() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = point_a(&reg);
    let plan = FlowPlan::from_csv(FIXTURE).unwrap();
    let audit = validate_plan(&plan, &c, PLAN_TOLERANCE).unwrap();
    assert!(audit.feasible, "{:?}", &audit.violations[..audit.violations.len().min(5)]);
    assert!(audit.max_row_violation <= 1.0);
    assert!((audit.objective_kg - 334_727.0).abs() <= 500.0, "{}", audit.objective_kg);
    assert!((audit.cargo_days - 104.0).abs() <= 1.0, "{}", audit.cargo_days);
    assert!((audit.crew_days - 30.0).abs() < 1e-9, "{}", audit.crew_days);
    assert!(audit.sos2_violations.is_empty());
    let departures = tug_departures(&c, &plan);
    assert!(departures.values().all(|&n| n <= 3));
    assert!(departures["tug2"] >= 1 && departures["tug7"] >= 1);
}

#[test]
fn plan_text_formats_round_trip() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = point_a(&reg);
    let plan = FlowPlan::from_csv(FIXTURE).unwrap();
    let via_json = FlowPlan::from_json(&plan.to_json()).unwrap();
    assert_eq!(via_json, plan);
    let via_csv = FlowPlan::from_csv(&plan.to_csv(&c.network.schema)).unwrap();
    let a = validate_plan(&plan, &c, PLAN_TOLERANCE).unwrap();
    let b = validate_plan(&via_csv, &c, PLAN_TOLERANCE).unwrap();
    assert_eq!(a.objective_kg, b.objective_kg);
    assert_eq!(a.cargo_days, b.cargo_days);
}

#[test]
fn shrunken_tug_capacity_breaks_the_fixture() {
    let reg = FitRegistry::load_embedded().unwrap();
    let mut cfg = point_a(&reg).config;
    cfg.fleet.capacity_kg.insert("tug2".into(), 5000.0);
    let c = build_campaign(&cfg, &reg).unwrap();
    let audit = validate_plan(&FlowPlan::from_csv(FIXTURE).unwrap(), &c, PLAN_TOLERANCE).unwrap();
    assert!(!audit.feasible);
    let (worst, amount) = &audit.violations[0];
    assert!(worst.contains("tug2") && worst.contains("cap"), "{worst}");
    assert!(*amount > 1.0);
}

#[test]
fn unknown_units_are_rejected() {
    let reg = FitRegistry::load_embedded().unwrap();
    let mut cfg = CampaignConfig::default();
    cfg.fleet.capacity_kg.insert("tug99".into(), 1.0);
    assert!(build_campaign(&cfg, &reg).is_err());
    let mut cfg = CampaignConfig::default();
    cfg.fleet.disabled_units.push("barge".into());
    assert!(build_campaign(&cfg, &reg).is_err());
}

#[test]
fn every_layer_is_acyclic() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = build_campaign(&CampaignConfig::default(), &reg).unwrap();
    assert_eq!(c.network.num_layers(), 18);
    for l in 0..c.network.num_layers() {
        let order = c.network.topological_order(l).unwrap_or_else(|| panic!("layer {l} has a cycle"));
        let pos = |n: &str| order.iter().position(|m| m == n).unwrap();
        for &a in &c.network.layers[l].active_arcs {
            let k = &c.network.transport[a].key;
            assert!(pos(&k.origin) < pos(&k.destination), "{k}");
        }
    }
}

#[test]
fn tugs_leave_parking_at_most_three_times() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = build_campaign(&CampaignConfig::default(), &reg).unwrap();
    for t in &c.tugs {
        let layers: BTreeSet<usize> = c
            .network
            .transport
            .iter()
            .filter(|a| a.key.vehicle == t.name && a.key.origin == t.parking_orbit())
            .map(|a| a.key.layer)
            .collect();
        assert_eq!(layers.len(), 3, "{}", t.name);
    }
}

#[test]
fn commodities_stay_in_their_layers() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = build_campaign(&CampaignConfig::default(), &reg).unwrap();
    assert!(campaign_multigraph_issues(&c).is_empty());
    let schema = &c.network.schema;
    let cargo_only: Vec<usize> = c
        .tugs
        .iter()
        .map(|t| t.name.as_str())
        .chain([F_HIGH, F_LOW, STR_DTANK])
        .map(|n| schema.index_of(n).unwrap())
        .collect();
    let crew_only: Vec<usize> = [CSM, LM, STR_US, F_US].iter().map(|n| schema.index_of(n).unwrap()).collect();
    for layer in &c.network.layers {
        let banned = if layer.tag.is_crew() { &cargo_only } else { &crew_only };
        for &a in &layer.active_arcs {
            let arc = &c.network.transport[a];
            for &k in banned {
                assert!(!arc.allowed[k], "{} on {}", schema.get(k).name, arc.key);
                assert_eq!(c.model.variables[c.vars.flow_out[a][k]].upper, 0.0);
            }
        }
    }
    let crew_layers = c.network.layers.iter().filter(|l| l.tag.is_crew()).count();
    let returns = c.network.layers.iter().filter(|l| l.tag == LayerTag::CrewReturn).count();
    assert_eq!((crew_layers, returns), (6, 3));
}

#[test]
fn model_size_is_stable() {
    let reg = FitRegistry::load_embedded().unwrap();
    let c = build_campaign(&CampaignConfig::default(), &reg).unwrap();
    let m = &c.model;
    let discrete = m.variables.iter().filter(|v| v.kind.is_discrete()).count();
    let sizes = (m.num_vars(), discrete, m.constraints.len(), m.sos2.len());
    assert_eq!(sizes, (21222, 13692, 5599, 0));
}

fn quick_opts(secs: u64) -> MilpOptions {
    MilpOptions {
        time_limit: Some(Duration::from_secs(secs)),
        ..Default::default()
    }
}

fn single_mission(crew_days: f64) -> CampaignConfig {
    CampaignConfig {
        crew_days,
        missions: 1,
        tug_uses: 1,
        ..Default::default()
    }
}

/// Solves, then checks every returned solution against the model.
fn solve_checked(c: &Campaign) -> f64 {
    let s = solve_campaign(c, &quick_opts(60), &c.config.solver.screening);
    assert_eq!(s.result.status, SolveStatus::Optimal);
    let x = s.result.values.as_ref().unwrap();
    let report = c.model.check(x, &Tolerances::default());
    assert!(report.feasible, "{:?}", report.violated);
    assert!(report.sos2_violations.is_empty());
    for set in &c.model.sos2 {
        assert!(set.is_satisfied(x, 1e-6), "{}", set.name);
    }
    let plan = s.plan.unwrap();
    assert!(tug_departures(c, &plan).values().all(|&n| n <= c.config.tug_uses));
    s.result.objective.unwrap()
}

#[test]
fn looser_crew_time_never_costs_more() {
    let reg = FitRegistry::load_embedded().unwrap();
    let tight = solve_checked(&build_campaign(&single_mission(21.0), &reg).unwrap());
    let loose = solve_checked(&build_campaign(&single_mission(30.0), &reg).unwrap());
    assert!(loose <= tight * (1.0 + 1e-4), "{loose} > {tight}");
}

#[test]
fn sos2_solutions_are_adjacent() {
    for (bound, expected) in [(4.0, -2.0), (1.0, -2.0), (0.5, -1.0)] {
        let m = common::pwl_square(bound);
        let r = solve_milp(&m, &MilpOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - expected).abs() < 1e-7, "bound {bound}: {:?}", r.objective);
        assert!(m.sos2[0].is_satisfied(r.values.as_ref().unwrap(), 1e-7));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn relaxing_rows_never_raises_the_optimum(seed in any::<u64>(), n in 4usize..12, rows in 1usize..12, extra in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tight = common::random_binary_milp(&mut rng, n, rows);
        let mut loose = tight.clone();
        for c in &mut loose.constraints {
            match c.relation {
                Relation::Le => c.rhs += extra,
                Relation::Ge => c.rhs -= extra,
                Relation::Eq => {}
            }
        }
        let a = solve_milp(&tight, &MilpOptions::default());
        let b = solve_milp(&loose, &MilpOptions::default());
        if a.status == SolveStatus::Optimal {
            prop_assert_eq!(b.status, SolveStatus::Optimal);
            prop_assert!(b.objective.unwrap() <= a.objective.unwrap() + 1e-9);
        }
    }
}

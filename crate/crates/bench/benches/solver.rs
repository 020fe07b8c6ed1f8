use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use spacelog_core::cislunar::{build_campaign, validate_plan, CampaignConfig, FlowPlan, PLAN_TOLERANCE};
use spacelog_core::milp::{parse_lp, write_lp};
use spacelog_core::solver::solve_lp;
use spacelog_core::traj::FitRegistry;

const FIXTURE: &str = include_str!("../../core/tests/fixtures/point_a_plan.csv");

fn campaign(c: &mut Criterion) {
    let reg = FitRegistry::load_embedded().unwrap();
    let base = build_campaign(&CampaignConfig::default(), &reg).unwrap();
    c.bench_function("build_baseline_campaign", |b| {
        b.iter(|| build_campaign(black_box(&CampaignConfig::default()), &reg).unwrap())
    });
    let mut g = c.benchmark_group("relaxation");
    g.sample_size(10);
    g.bench_function("baseline_root_lp", |b| b.iter(|| solve_lp(black_box(&base.model))));
    g.finish();

    let text = write_lp(&base.model).unwrap();
    c.bench_function("lp_text_round_trip", |b| b.iter(|| parse_lp(black_box(&text)).unwrap()));

    let point_a = CampaignConfig {
        cargo_days: 120.0,
        crew_days: 30.0,
        gravity: 9.81,
        ..Default::default()
    };
    let pa = build_campaign(&point_a, &reg).unwrap();
    let plan = FlowPlan::from_csv(FIXTURE).unwrap();
    c.bench_function("validate_fixture_plan", |b| {
        b.iter(|| validate_plan(black_box(&plan), &pa, PLAN_TOLERANCE).unwrap())
    });
}

criterion_group!(benches, campaign);
criterion_main!(benches);

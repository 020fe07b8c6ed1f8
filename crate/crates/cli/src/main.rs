//! `spacelog`: solve campaigns, sweep time bounds, replay plans and solve
//! LP-text models.
//!
//! Exit codes: 0 success, 1 usage/config/schema error, 2 infeasible,
//! 3 a time or node limit stopped the search.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spacelog_core::cislunar::{
    build_campaign, campaign_schema, pareto_sweep, sorted_grid, solve_campaign, validate_plan, Campaign,
    CampaignConfig, FlowPlan, SweepPoint, PLAN_TOLERANCE,
};
use spacelog_core::milp::{parse_lp, write_lp};
use spacelog_core::solver::{solve_milp, MilpOptions, SolveResult, SolveStatus};
use spacelog_core::traj::FitRegistry;

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(name = "spacelog", version, about = "Event-driven cislunar logistics campaign optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and solve one campaign.
    Solve {
        #[command(flatten)]
        common: SolveArgs,
        /// Write the event network as JSON.
        #[arg(long)]
        dump_network: Option<PathBuf>,
        /// Write the MILP; `.lp` gives LP text, anything else JSON.
        #[arg(long)]
        dump_model: Option<PathBuf>,
    },
    /// Solve a grid of (cargo days, crew days) bounds and write pareto.csv.
    Sweep {
        #[command(flatten)]
        common: SolveArgs,
        /// `CARGO,..xCREW,..`, e.g. `0,120,240x21,30`.
        #[arg(long, default_value = "0,120,240,360,480x21,30,40,50")]
        grid: String,
    },
    /// Replay a plan (JSON or CSV) against a campaign and report residuals.
    Validate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Largest accepted residual, kg.
        #[arg(long, default_value_t = PLAN_TOLERANCE)]
        tolerance: f64,
    },
    /// Solve a model in LP text format and print a JSON report.
    SolveLp {
        model: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        gap: Option<f64>,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Also write the solution values as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    gap: Option<f64>,
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
}

/// An error carrying its exit code.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_CONFIG, e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve {
            common,
            dump_network,
            dump_model,
        } => cmd_solve(&common, dump_network.as_deref(), dump_model.as_deref()),
        Command::Sweep { common, grid } => cmd_sweep(&common, &grid),
        Command::Validate {
            plan,
            config,
            tolerance,
        } => cmd_validate(&plan, &config, tolerance),
        Command::SolveLp {
            model,
            threads,
            gap,
            time_limit,
            out,
        } => cmd_solve_lp(&model, threads, gap, time_limit, out.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path, args: Option<&SolveArgs>) -> Result<CampaignConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = CampaignConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?;
    if let Some(a) = args {
        if let Some(t) = a.threads {
            cfg.solver.threads = t;
        }
        if let Some(g) = a.gap {
            cfg.solver.gap = g;
        }
        if let Some(s) = a.time_limit {
            cfg.solver.time_limit_s = Some(s);
        }
        cfg.check()?;
    }
    Ok(cfg)
}

fn registry() -> Result<FitRegistry> {
    FitRegistry::load_default().context("loading trajectory tables")
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::GapLimit => 0,
        SolveStatus::Infeasible | SolveStatus::Unbounded => EXIT_INFEASIBLE,
        SolveStatus::TimeLimit | SolveStatus::NodeLimit => EXIT_LIMIT,
    }
}

fn result_json(r: &SolveResult) -> serde_json::Value {
    json!({
        "status": r.status.as_str(),
        "objective": r.objective,
        "best_bound": r.best_bound.is_finite().then_some(r.best_bound),
        "gap": r.gap.is_finite().then_some(r.gap),
        "nodes": r.nodes,
        "lp_iterations": r.lp_iterations,
        "wall_time_s": r.wall_time_s,
    })
}

fn dump(c: &Campaign, network: Option<&Path>, model: Option<&Path>) -> Result<()> {
    if let Some(p) = network {
        write(p, &serde_json::to_string_pretty(&c.network)?)?;
    }
    if let Some(p) = model {
        let text = if p.extension().is_some_and(|e| e == "lp") {
            write_lp(&c.model)?
        } else {
            serde_json::to_string_pretty(&c.model)?
        };
        write(p, &text)?;
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs, network: Option<&Path>, model: Option<&Path>) -> Result<u8, Failure> {
    let cfg = load_config(&args.config, Some(args))?;
    let reg = registry()?;
    let c = build_campaign(&cfg, &reg)?;
    dump(&c, network, model)?;
    let sol = solve_campaign(&c, &cfg.solver.options(), &cfg.solver.screening);
    let r = &sol.result;
    let mut report = result_json(r);
    if let Some(plan) = &sol.plan {
        report["cargo_days"] = json!(plan.cargo_days);
        report["crew_days"] = json!(plan.crew_days);
        write(&args.out.join("solution.json"), &plan.to_json())?;
        write(&args.out.join("solution.csv"), &plan.to_csv(&c.network.schema))?;
    }
    report["config"] = json!(cfg.name);
    report["fleet_trials"] = serde_json::to_value(&sol.trials)?;
    write(&args.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    match r.objective {
        Some(o) => println!(
            "{}: objective {:.1} kg, gap {:.2e}, {} nodes, {:.1} s",
            r.status.as_str(),
            o,
            r.gap,
            r.nodes,
            r.wall_time_s
        ),
        None => println!("{}: no plan found, {} nodes, {:.1} s", r.status.as_str(), r.nodes, r.wall_time_s),
    }
    Ok(status_code(r.status))
}

fn parse_axis(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad grid value {v:?}")))
        .collect()
}

/// Parses `CARGO,..xCREW,..`.
fn parse_grid(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (cargo, crew) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("grid must look like 0,120x21,30"))?;
    Ok((parse_axis(cargo)?, parse_axis(crew)?))
}

fn pareto_csv(points: &[SweepPoint]) -> Result<String> {
    let baseline = points.first().and_then(|p| p.objective_kg);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["T_cargo", "T_crew", "objective_kg", "savings_pct", "status"])?;
    for p in points {
        let obj = p.objective_kg.map(|o| format!("{o:.3}")).unwrap_or_default();
        let savings = match (baseline, p.objective_kg) {
            (Some(b), Some(o)) if b > 0.0 => format!("{:.4}", 100.0 * (b - o) / b),
            _ => String::new(),
        };
        let status = if p.error.is_some() { "error" } else { p.status.as_str() };
        w.write_record([p.cargo_days.to_string(), p.crew_days.to_string(), obj, savings, status.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn cmd_sweep(args: &SolveArgs, grid: &str) -> Result<u8, Failure> {
    let cfg = load_config(&args.config, Some(args))?;
    let (cargo, crew) = parse_grid(grid)?;
    let points = sorted_grid(&cargo, &crew);
    let reg = registry()?;
    let schema = campaign_schema(&reg);
    let report = pareto_sweep(&cfg, &reg, &points, |p| {
        eprintln!(
            "T_cargo {:>5} T_crew {:>4}: {} {} ({:.1} s)",
            p.cargo_days,
            p.crew_days,
            p.status.as_str(),
            p.objective_kg.map(|o| format!("{o:.1} kg")).unwrap_or_else(|| "-".into()),
            p.wall_time_s
        );
    })?;
    write(&args.out.join("pareto.csv"), &pareto_csv(&report.points)?)?;
    for p in &report.points {
        if let Some(plan) = &p.plan {
            let name = format!("plan_{}_{}.csv", p.cargo_days, p.crew_days);
            write(&args.out.join("plans").join(name), &plan.to_csv(&schema))?;
        }
    }
    write(&args.out.join("sweep.json"), &serde_json::to_string_pretty(&report)?)?;
    for &(i, j) in &report.monotonicity_violations {
        let (a, b) = (&report.points[i], &report.points[j]);
        eprintln!(
            "warning: ({}, {}) costs more than the tighter ({}, {})",
            a.cargo_days, a.crew_days, b.cargo_days, b.crew_days
        );
    }
    let code = report
        .points
        .iter()
        .map(|p| if p.error.is_some() { EXIT_CONFIG } else { status_code(p.status) })
        .max()
        .unwrap_or(0);
    Ok(code)
}

fn read_plan(path: &Path) -> Result<FlowPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let plan = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        FlowPlan::from_csv(&text)
    } else {
        FlowPlan::from_json(&text)
    };
    plan.with_context(|| format!("plan {}", path.display()))
}

fn cmd_validate(plan: &Path, config: &Path, tolerance: f64) -> Result<u8, Failure> {
    let cfg = load_config(config, None)?;
    let plan = read_plan(plan)?;
    let c = build_campaign(&cfg, &registry()?)?;
    let audit = validate_plan(&plan, &c, tolerance)?;
    println!(
        "objective {:.1} kg, cargo {} d, crew {} d",
        audit.objective_kg, audit.cargo_days, audit.crew_days
    );
    for (tag, s) in &audit.by_tag {
        println!("  {tag:<16} rows {:>5}  max residual {:.3}", s.rows, s.max_violation);
    }
    println!(
        "  bounds max {:.3}, integrality max {:.2e}",
        audit.max_bound_violation, audit.max_integrality_violation
    );
    for (row, v) in audit.violations.iter().take(20) {
        println!("  violated {row}: {v:.3}");
    }
    for set in &audit.sos2_violations {
        println!("  violated SOS2 set {set}");
    }
    if audit.feasible {
        println!("feasible within {tolerance} kg");
        Ok(0)
    } else {
        println!("infeasible");
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_solve_lp(
    path: &Path,
    threads: Option<usize>,
    gap: Option<f64>,
    time_limit: Option<f64>,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model = parse_lp(&text).with_context(|| format!("model {}", path.display()))?;
    model.audit().map_err(|e| anyhow!("model {}: {e}", path.display()))?;
    let mut opts = MilpOptions::default();
    if let Some(t) = threads {
        opts.threads = t.max(1);
    }
    if let Some(g) = gap {
        if !(g >= 0.0) {
            return Err(anyhow!("gap must be nonnegative").into());
        }
        opts.gap = g;
    }
    if let Some(s) = time_limit {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(anyhow!("time limit must be a nonnegative number of seconds").into());
        }
        opts.time_limit = Some(std::time::Duration::from_secs_f64(s));
    }
    let r = solve_milp(&model, &opts);
    println!("{}", serde_json::to_string_pretty(&result_json(&r))?);
    if let (Some(p), Some(x)) = (out, &r.values) {
        let values: serde_json::Map<String, serde_json::Value> = model
            .variables
            .iter()
            .zip(x)
            .map(|(v, &val)| (v.name.clone(), json!(val)))
            .collect();
        write(p, &serde_json::to_string_pretty(&values)?)?;
    }
    Ok(status_code(r.status))
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chargeprice::demand::{fit_history, read_history, RlsConfig, VarianceRecursion};
use chargeprice::grid::bus_sensitivities;
use chargeprice::optimizer::simulate::write_trajectory_csv;
use chargeprice::optimizer::{greedy, sdp_solve, simulate_policy, NoiseMode, Policy, Simulation};
use chargeprice::pareto::{adaptive_refine, build_front, evaluate_weights, simplex_grid, weighted_sum_sweep, write_front_csv, Front};
use chargeprice::scenario::{parse_scenario_file, Scenario};
use chargeprice::System;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

const THREADS_ENV: &str = "CHARGEPRICE_THREADS";

#[derive(Parser)]
#[command(name = "chargeprice", version, about = "Pricing and storage scheduling for charging stations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a policy and simulate it.
    Run(RunArgs),
    /// Profit gain of the optimal policy over the greedy one, per seed.
    Compare(CompareArgs),
    /// Active and reactive voltage sensitivity of every PQ bus.
    Sensitivities(ScenarioArgs),
    /// Weighted-sum Pareto front with knee points.
    Pareto(ParetoArgs),
    /// Fit an elasticity model to a price/demand history.
    DemandFit(FitArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override a scenario field, e.g. `storage.unit_storage_cost=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sdp,
    Greedy,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    #[arg(long, value_enum, default_value = "sdp")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = (0..20).collect::<Vec<u64>>())]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
}

#[derive(Args)]
struct ParetoArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    #[arg(long, default_value_t = 0.1)]
    weight_step: f64,
    #[arg(long, default_value_t = 1.0)]
    rho0: f64,
    #[arg(long, default_value_t = 1)]
    refine_passes: usize,
    /// Nearest-neighbour distance, in normalized objective space, above which a segment is refined.
    #[arg(long, default_value_t = 0.25)]
    refine_threshold: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.98)]
    forgetting: f64,
    /// Batch start on the first full-rank block of samples.
    #[arg(long)]
    exact_start: bool,
    #[arg(long, value_enum, default_value = "literal")]
    variance: Variance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variance {
    Literal,
    Corrected,
}

enum Failure {
    Usage(String),
    Domain(chargeprice::Error),
}

impl From<chargeprice::Error> for Failure {
    fn from(e: chargeprice::Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => return fail(Failure::Usage(format!("{THREADS_ENV} must be a thread count"))),
        }
    }
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sensitivities(a) => cmd_sensitivities(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::DemandFit(a) => cmd_demand_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("{}", json!({ "error": "usage", "message": msg }));
            ExitCode::from(2)
        }
        Failure::Domain(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Loaded {
    scenario: Scenario,
    digest: String,
}

fn load(args: &ScenarioArgs) -> Outcome<Loaded> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.scenario.display())))?;
    let text = apply_overrides(&text, &args.overrides)?;
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let file = parse_scenario_file(&text)?;
    let scenario = Scenario::from_file(&file, base)?;
    let canonical = scenario.to_toml()?;
    let digest = format!("{:x}", Sha256::digest(canonical.as_bytes()));
    Ok(Loaded { scenario, digest })
}

fn apply_overrides(text: &str, sets: &[String]) -> Outcome<String> {
    if sets.is_empty() {
        return Ok(text.to_string());
    }
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| usage(format!("scenario: {e}")))?;
    for set in sets {
        let (key, raw) = set.split_once('=').ok_or_else(|| usage(format!("--set {set}: expected KEY=VALUE")))?;
        let value: toml::Value = format!("v = {raw}")
            .parse::<toml::Table>()
            .map(|mut t| t.remove("v").expect("parsed key"))
            .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("split yields one part");
        let mut table = &mut doc;
        for p in parts {
            table = table
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| usage(format!("--set {key}: {p} is not a section")))?;
        }
        table.insert(last.to_string(), value);
    }
    Ok(toml::to_string(&doc).expect("tables serialize"))
}

fn out_dir(dir: &Path) -> Outcome<()> {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Domain(chargeprice::Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
    })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Outcome<()> {
    write(path, &(serde_json::to_string_pretty(v).expect("serializable") + "\n"))
}

#[derive(Serialize)]
struct HorizonRow {
    horizon: usize,
    mean_storage: f64,
    mean_procurement: f64,
    mean_price: f64,
    mean_demand: f64,
    profit: f64,
    satisfaction: f64,
    impact: f64,
    utility: f64,
    safeguard_warnings: usize,
}

fn horizon_table(sim: &Simulation) -> Vec<HorizonRow> {
    let n = sim.trajectories.len() as f64;
    let k = sim.trajectories[0].steps.len();
    (0..k)
        .map(|h| {
            let steps: Vec<_> = sim.trajectories.iter().map(|t| &t.steps[h]).collect();
            let mean = |f: &dyn Fn(&chargeprice::optimizer::simulate::TrajectoryStep) -> f64| steps.iter().map(|s| f(s)).sum::<f64>() / n;
            HorizonRow {
                horizon: h + 1,
                mean_storage: mean(&|s| s.storage),
                mean_procurement: mean(&|s| s.decision.procurement),
                mean_price: mean(&|s| s.decision.prices.iter().sum::<f64>() / s.decision.prices.len() as f64),
                mean_demand: mean(&|s| s.demands.iter().sum()),
                profit: mean(&|s| s.profit),
                satisfaction: mean(&|s| s.satisfaction),
                impact: mean(&|s| s.impact),
                utility: mean(&|s| s.utility),
                safeguard_warnings: steps.iter().filter(|s| s.safeguard_active).count(),
            }
        })
        .collect()
}

fn solve(system: &System, mode: Mode) -> Outcome<Policy> {
    Ok(match mode {
        Mode::Sdp => sdp_solve(system)?,
        Mode::Greedy => greedy(system)?,
    })
}

fn cmd_run(a: RunArgs) -> Outcome<()> {
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let start = Instant::now();
    let loaded = load(&a.common)?;
    out_dir(&a.common.out)?;
    let system = System::new(loaded.scenario)?;
    let policy = solve(&system, a.mode)?;
    let sim = simulate_policy(&system, &policy, a.runs, a.seed, NoiseMode::Stochastic)?;
    let out = &a.common.out;
    policy.write_json(&out.join("policy.json"))?;
    write_trajectory_csv(&out.join("trajectory.csv"), &sim.trajectories[0])?;
    let report = json!({
        "tool": "chargeprice",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario_digest": loaded.digest,
        "mode": match a.mode { Mode::Sdp => "sdp", Mode::Greedy => "greedy" },
        "seed": a.seed,
        "runs": a.runs,
        "initial_value": policy.initial_value(&system),
        "normalizers": system.normalizers,
        "horizons": horizon_table(&sim),
        "totals": sim.summary,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    write_json(&out.join("summary.json"), &report)
}

fn cmd_compare(a: CompareArgs) -> Outcome<()> {
    if a.runs == 0 || a.seeds.is_empty() {
        return Err(usage("need at least one seed and one run"));
    }
    let loaded = load(&a.common)?;
    out_dir(&a.common.out)?;
    let system = System::new(loaded.scenario)?;
    let sdp = sdp_solve(&system)?;
    let gr = greedy(&system)?;
    let mut text = String::from("seed,sdp_profit,greedy_profit,gain_pct,sdp_utility,greedy_utility\n");
    let mut gains = Vec::new();
    for &seed in &a.seeds {
        let s = simulate_policy(&system, &sdp, a.runs, seed, NoiseMode::Stochastic)?.summary;
        let g = simulate_policy(&system, &gr, a.runs, seed, NoiseMode::Stochastic)?.summary;
        let gain = gain_pct(s.mean_profit, g.mean_profit);
        gains.push(gain);
        text += &format!(
            "{seed},{},{},{gain},{},{}\n",
            s.mean_profit, g.mean_profit, s.mean_expected_utility, g.mean_expected_utility
        );
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    text += &format!("mean,,,{mean},,\n");
    write(&a.common.out.join("compare.csv"), &text)?;
    write_json(
        &a.common.out.join("compare.json"),
        &json!({
            "tool": "chargeprice",
            "version": env!("CARGO_PKG_VERSION"),
            "scenario_digest": loaded.digest,
            "runs_per_seed": a.runs,
            "mean_gain_pct": mean,
        }),
    )
}

fn gain_pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        100.0 * (a - b) / b.abs()
    }
}

fn cmd_sensitivities(a: ScenarioArgs) -> Outcome<()> {
    let loaded = load(&a)?;
    out_dir(&a.out)?;
    let lin = chargeprice::grid::linearize(&loaded.scenario.network, chargeprice::grid::PowerFlowOptions::default())?;
    let mut rows = bus_sensitivities(&lin.inverse, &loaded.scenario.network);
    rows.sort_by(|x, y| y.active.total_cmp(&x.active).then(x.bus.cmp(&y.bus)));
    let mut text = String::from("rank,bus,s_active,s_reactive\n");
    for (r, b) in rows.iter().enumerate() {
        text += &format!("{},{},{},{}\n", r + 1, b.bus, b.active, b.reactive);
    }
    write(&a.out.join("sensitivities.csv"), &text)
}

fn cmd_pareto(a: ParetoArgs) -> Outcome<()> {
    let loaded = load(&a.common)?;
    out_dir(&a.common.out)?;
    let system = System::new(loaded.scenario)?;
    let grid = simplex_grid(a.weight_step)?;
    let sweep = weighted_sum_sweep(&system, &grid)?;
    let raw = build_front(&sweep, f64::INFINITY);
    let raw_all = Front {
        points: sweep.clone(),
        rho: vec![],
        knees: vec![],
        rho0: f64::INFINITY,
    };
    write_front_csv(&a.common.out.join("sweep.csv"), &raw_all, false)?;
    let refined = adaptive_refine(&raw.points, a.refine_passes, a.refine_threshold, system.scenario.solver.execution, |w| {
        evaluate_weights(&system, w)
    })?;
    let front = build_front(&refined, a.rho0);
    write_front_csv(&a.common.out.join("front.csv"), &front, false)?;
    write_front_csv(&a.common.out.join("knees.csv"), &front, true)?;
    let mut text = String::from("lambda1,lambda2,lambda3");
    for j in 1..=system.scenario.stations {
        text += &format!(",d_{j}");
    }
    text += "\n";
    for p in &front.points {
        let [l1, l2, l3] = p.weights.lambda;
        text += &format!("{l1},{l2},{l3}");
        for d in &p.station_demand {
            text += &format!(",{d}");
        }
        text += "\n";
    }
    write(&a.common.out.join("front_demand.csv"), &text)?;
    write_json(
        &a.common.out.join("pareto.json"),
        &json!({
            "tool": "chargeprice",
            "version": env!("CARGO_PKG_VERSION"),
            "scenario_digest": loaded.digest,
            "weight_step": a.weight_step,
            "rho0": a.rho0,
            "swept": sweep.len(),
            "front": front.points.len(),
            "knees": front.knees.len(),
        }),
    )
}

fn cmd_demand_fit(a: FitArgs) -> Outcome<()> {
    if !a.history.is_file() {
        return Err(usage(format!("cannot read {}", a.history.display())));
    }
    let history = read_history(&a.history)?;
    out_dir(&a.out)?;
    let cfg = RlsConfig {
        forgetting: a.forgetting,
        exact_start: a.exact_start,
        variance_recursion: match a.variance {
            Variance::Literal => VarianceRecursion::Literal,
            Variance::Corrected => VarianceRecursion::Corrected,
        },
        ..RlsConfig::default()
    };
    let report = fit_history(&history, cfg)?;
    let digest = format!("{:x}", Sha256::digest(std::fs::read(&a.history).unwrap_or_default()));
    write_json(&a.out.join("elasticity.json"), &report.model)?;
    write_json(
        &a.out.join("fit.json"),
        &json!({
            "tool": "chargeprice",
            "version": env!("CARGO_PKG_VERSION"),
            "history_digest": digest,
            "samples": report.samples,
            "rmse": report.rmse,
            "warnings": report.warnings,
            "forgetting": a.forgetting,
        }),
    )
}

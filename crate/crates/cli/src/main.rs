//! `shb-lab`: run exact evaluations, Monte Carlo trials, bounds, sweeps and
//! property suites for heavy-ball SGD on diagonal quadratics.
//!
//! Exit status: 0 on success (including runs with diverged trials), 1 on
//! runtime errors, 2 on configuration or usage errors, 3 when a property
//! suite reports violations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use shb_core::config::ExperimentConfig;
use shb_core::exact::exact_risk;
use shb_core::rates::{self, Engine, DEFAULT_TAIL_FRACTION, PRESET_DIM};
use shb_core::report::{self, FIT_HEADER, SWEEP_HEADER};
use shb_core::verify::{self, Suite, VERIFY_HEADER};
use shb_core::{fit_rate, run_sweep, shb_run, upper_bound_thm31, StepSchedule};

#[derive(Parser, Debug)]
#[command(name = "shb-lab", version, about = "Heavy-ball SGD with step decay on stochastic quadratics")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact expected risk and its bias/variance split.
    Exact {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the per-step risk trace.
        #[arg(long)]
        trace: bool,
    },
    /// Monte Carlo trials of the stochastic recursion.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Upper and lower bounds for the configured problem.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Risk over a grid of horizons (`t_grid` in the config, else `T`).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = EngineArg::Exact)]
        engine: EngineArg,
    },
    /// Log-log rate fits for a sweep CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TAIL_FRACTION)]
        tail_fraction: f64,
    },
    /// Run a named experiment bundle end to end.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(rates::PRESET_NAMES))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = EngineArg::Exact)]
        engine: EngineArg,
        /// Monte Carlo trials per horizon.
        #[arg(long, default_value_t = 5)]
        trials: u32,
        #[arg(long, default_value_t = DEFAULT_TAIL_FRACTION)]
        tail_fraction: f64,
        /// Free exponent: decay `a` for fig3c, log power `c` for fig3d.
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, default_value_t = PRESET_DIM)]
        dim: usize,
    },
    /// Randomized property suites.
    Verify {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these suites (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Exact,
    Mc,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Exact => Engine::Exact,
            EngineArg::Mc => Engine::MonteCarlo,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
    Properties(usize),
}

impl From<shb_core::Error> for Failure {
    fn from(e: shb_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Properties(n)) => {
            eprintln!("property suites failed: {n} violation(s)");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    // Building the problem validates spectrum and optimum before any work.
    cfg.problem().map_err(|e| Failure::Config(e.to_string()))?;
    cfg.parameter_rule().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

/// Write `text` to `out` (plus a `.meta.json` sidecar) or to stdout.
fn emit(out: Option<&Path>, text: &str, meta: serde_json::Value) -> CliResult<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            write_meta(path, meta)?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Run metadata lives beside the output so the output itself stays
/// byte-identical across reruns.
fn write_meta(path: &Path, mut meta: serde_json::Value) -> CliResult<()> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    meta["created_unix"] = json!(now);
    meta["tool_version"] = json!(env!("CARGO_PKG_VERSION"));
    meta["args"] = json!(std::env::args().collect::<Vec<_>>());
    fs::write(sidecar(path, ".meta.json"), pretty(&meta)? + "\n")?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Exact { config, out, trace } => cmd_exact(&config, out.as_deref(), trace),
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out.as_deref(), seed),
        Command::Bounds { config, out } => cmd_bounds(&config, out.as_deref()),
        Command::Sweep {
            config,
            out,
            seed,
            engine,
        } => cmd_sweep(&config, out.as_deref(), seed, engine.into()),
        Command::Fit {
            input,
            out,
            tail_fraction,
        } => cmd_fit(&input, out.as_deref(), tail_fraction),
        Command::Preset {
            name,
            out,
            seed,
            engine,
            trials,
            tail_fraction,
            param,
            dim,
        } => cmd_preset(&name, out.as_deref(), seed, engine.into(), trials, tail_fraction, param, dim),
        Command::Verify {
            samples,
            seed,
            out,
            suites,
        } => cmd_verify(samples, seed, out.as_deref(), &suites),
    }
}

fn cmd_exact(config: &Path, out: Option<&Path>, trace: bool) -> CliResult<()> {
    let cfg = load_config(config)?;
    let problem = cfg.problem()?;
    let (beta, eta0) = cfg.parameter_rule()?.resolve(problem.lambda_max(), cfg.total_iters)?;
    let schedule = StepSchedule::new(eta0, cfg.total_iters)?;
    eprintln!("exact: d = {}, T = {}, beta = {beta}, eta0 = {eta0}", problem.dim(), cfg.total_iters);
    let body = match exact_risk(&problem, &schedule, beta, None, trace) {
        Ok(r) => json!({
            "T": cfg.total_iters,
            "beta": beta,
            "eta0": eta0,
            "diverged": false,
            "total": r.total,
            "bias": r.bias,
            "variance": r.variance,
            "per_coordinate": r.per_coordinate,
            "trace": r.trace,
        }),
        Err(shb_core::Error::NonFinite { coordinate, step }) => json!({
            "T": cfg.total_iters,
            "beta": beta,
            "eta0": eta0,
            "diverged": true,
            "diverged_coordinate": coordinate,
            "diverged_step": step,
        }),
        Err(e) => return Err(e.into()),
    };
    emit(out, &(pretty(&body)? + "\n"), json!({ "command": "exact" }))
}

fn cmd_simulate(config: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let problem = cfg.problem()?;
    let run = cfg.run_config(&problem)?;
    eprintln!(
        "simulate: d = {}, T = {}, {} trial(s), seed {}",
        problem.dim(),
        run.total_iters,
        run.trials,
        run.seed
    );
    let outcome = shb_run(&problem, &run)?;
    if outcome.n_diverged > 0 {
        eprintln!("warning: {} of {} trial(s) diverged", outcome.n_diverged, run.trials);
    }
    let body = json!({
        "T": run.total_iters,
        "beta": run.beta,
        "eta0": run.eta0,
        "seed": run.seed,
        "mean_risk": outcome.mean_risk,
        "std_risk": outcome.std_risk,
        "standard_error": outcome.standard_error(),
        "n_converged": outcome.n_converged,
        "n_diverged": outcome.n_diverged,
        "trials": outcome.trials,
    });
    emit(out, &(pretty(&body)? + "\n"), json!({ "command": "simulate", "seed": run.seed }))
}

fn cmd_bounds(config: &Path, out: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(config)?;
    let problem = cfg.problem()?;
    let (beta, eta0) = cfg.parameter_rule()?.resolve(problem.lambda_max(), cfg.total_iters)?;
    let report = upper_bound_thm31(&problem, eta0, beta, cfg.total_iters)?;
    if !report.validity.certified() {
        eprintln!("note: preconditions not all met; bounds are not certified ({:?})", report.validity);
    }
    let mut body = serde_json::to_value(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    body["T"] = json!(cfg.total_iters);
    body["beta"] = json!(beta);
    body["eta0"] = json!(eta0);
    if let (Some(a), Some(b)) = (cfg.spectrum.power_law_exponent(), cfg.optimum.source_exponent()) {
        if let Ok((exponent, regime)) = shb_core::optimal_rate_exponent(a, b) {
            body["optimal_rate_exponent"] = json!(exponent);
            body["regime"] = json!(regime.label());
        }
    }
    emit(out, &(pretty(&body)? + "\n"), json!({ "command": "bounds" }))
}

fn cmd_sweep(config: &Path, out: Option<&Path>, seed: Option<u64>, engine: Engine) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let spec = cfg.sweep_spec(engine)?;
    eprintln!("sweep: {} horizon(s), engine {}", spec.t_grid.len(), engine.label());
    let result = run_sweep(&spec)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let label = config.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep").replace(',', "_");
    let text = format!("{SWEEP_HEADER}\n{}", report::sweep_rows(&label, &result));
    emit(out, &text, json!({ "command": "sweep", "seed": cfg.seed }))
}

#[derive(Debug, serde::Deserialize)]
struct SweepRow {
    preset: String,
    #[serde(rename = "T")]
    t: u64,
    engine: String,
    risk: Option<f64>,
}

#[derive(Serialize)]
struct FitSummary {
    preset: String,
    engine: String,
    slope: f64,
    intercept: f64,
    residual_rms: f64,
    points_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_slope: Option<f64>,
}

type Series = Vec<(u64, f64)>;

/// Mean risk per horizon for each `(preset, engine)` group, in file order.
fn read_sweep_csv(path: &Path) -> CliResult<Vec<((String, String), Series)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for row in reader.deserialize::<SweepRow>() {
        let row = row.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let key = (row.preset, row.engine);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let slot = groups.entry(key).or_default().entry(row.t).or_insert((0.0, 0));
        if let Some(r) = row.risk {
            slot.0 += r;
            slot.1 += 1;
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let series = groups[&key]
                .iter()
                .filter(|(_, (_, n))| *n > 0)
                .map(|(&t, &(sum, n))| (t, sum / n as f64))
                .collect();
            (key, series)
        })
        .collect())
}

fn cmd_fit(input: &Path, out: Option<&Path>, tail_fraction: f64) -> CliResult<()> {
    let groups = read_sweep_csv(input)?;
    let mut csv_text = format!("{FIT_HEADER}\n");
    let mut summaries = Vec::new();
    for ((preset, engine), series) in groups {
        match rates::fit_series(&series, tail_fraction) {
            Ok(fit) => {
                csv_text.push_str(&report::fit_row(&preset, &engine, &fit, None));
                summaries.push(FitSummary {
                    preset,
                    engine,
                    slope: fit.slope,
                    intercept: fit.intercept,
                    residual_rms: fit.residual_rms,
                    points_used: fit.points_used,
                    reference_slope: None,
                });
            }
            Err(e) => eprintln!("warning: {preset} ({engine}): {e}"),
        }
    }
    println!("{}", pretty(&summaries)?);
    if let Some(path) = out {
        fs::write(path, csv_text)?;
        write_meta(path, json!({ "command": "fit" }))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_preset(
    name: &str,
    out: Option<&Path>,
    seed: u64,
    engine: Engine,
    trials: u32,
    tail_fraction: f64,
    param: Option<f64>,
    dim: usize,
) -> CliResult<()> {
    let preset = rates::preset_with(name, param, dim).map_err(|e| Failure::Config(e.to_string()))?;
    let mut csv_text = format!("{SWEEP_HEADER}\n");
    let mut fit_text = format!("{FIT_HEADER}\n");
    let mut summaries = Vec::new();
    let mut extras = Vec::new();
    for (i, variant) in preset.variants.iter().enumerate() {
        let label = format!("{name}:{}", variant.label);
        eprintln!("{label}: {} horizon(s), engine {}", preset.t_grid.len(), engine.label());
        let spec = preset.sweep_spec(i, engine, trials, seed);
        let result = run_sweep(&spec)?;
        for w in &result.warnings {
            eprintln!("warning: {label}: {w}");
        }
        csv_text.push_str(&report::sweep_rows(&label, &result));
        match fit_rate(&result, tail_fraction) {
            Ok(fit) => {
                fit_text.push_str(&report::fit_row(&label, engine.label(), &fit, variant.reference_slope));
                summaries.push(FitSummary {
                    preset: label.clone(),
                    engine: engine.label().into(),
                    slope: fit.slope,
                    intercept: fit.intercept,
                    residual_rms: fit.residual_rms,
                    points_used: fit.points_used,
                    reference_slope: variant.reference_slope,
                });
            }
            Err(e) => eprintln!("warning: {label}: no fit: {e}"),
        }
        if name == "fig3d" {
            let c = param.unwrap_or(if i == 0 { 1.0 } else { 2.0 });
            if let Ok(spread) = rates::polylog_spread(&result.series(), c, tail_fraction) {
                extras.push(json!({ "preset": label, "polylog_spread": spread }));
            }
        }
        if name == "fig3a" {
            if let Some(last) = result.points.last() {
                extras.push(json!({ "preset": label, "T": last.t, "variance": last.variance, "bias": last.bias }));
            }
        }
    }
    let summary = json!({
        "preset": name,
        "description": preset.description,
        "engine": engine.label(),
        "fits": summaries,
        "reference_slopes": preset.reference_slopes,
        "notes": preset.notes,
        "extras": extras,
    });
    println!("{}", pretty(&summary)?);
    if let Some(path) = out {
        fs::write(sidecar(path, ".fit.csv"), &fit_text)?;
    }
    emit(out, &csv_text, json!({ "command": "preset", "preset": name, "seed": seed }))
}

fn cmd_verify(samples: usize, seed: u64, out: Option<&Path>, names: &[String]) -> CliResult<()> {
    let suites: Vec<Suite> = if names.is_empty() {
        Suite::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| Suite::from_name(n).ok_or_else(|| Failure::Config(format!("unknown suite {n:?}"))))
            .collect::<CliResult<_>>()?
    };
    let mut rows = Vec::new();
    let mut violations = 0;
    for suite in suites {
        eprintln!("verify: {} ...", suite.name());
        let report = verify::run_suite(suite, samples, seed).map_err(|e| match e {
            shb_core::Error::InvalidParameter { .. } => Failure::Config(e.to_string()),
            other => other.into(),
        })?;
        eprintln!(
            "  {} checked, {} violation(s), {} skipped",
            report.checked, report.violations, report.skipped
        );
        violations += report.violations;
        let single = verify::VerifyReport {
            samples,
            seed,
            suites: vec![report],
        };
        rows.extend(verify::report_rows(&single));
    }
    let text = format!("{VERIFY_HEADER}\n{}\n", rows.join("\n"));
    emit(out, &text, json!({ "command": "verify", "samples": samples, "seed": seed }))?;
    if violations > 0 {
        return Err(Failure::Properties(violations));
    }
    Ok(())
}

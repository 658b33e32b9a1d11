//! Scenario runner behind the `dimorph` binary.
//!
//! `dimorph <subcommand> --config <path> [--jobs K] [--seed S] [--out DIR]`.
//! Exit status is 0 on success, 2 for configuration errors and 1 for
//! failures while running.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::acceptance;
use crate::fit::{log_linear_fit, LinearFit};
use crate::ibm::{initial_population, simulate, IbmParams};
use crate::kernels::{BirthOperator, InheritanceKernel};
use crate::macro_solver::{
    coupled_full_run, integrate, integrate_normalized, MacroModel, MacroState, SexRatio,
};
use crate::measures::GridMeasure;
use crate::stability::{
    convergence_report, fixed_point, run_lln, ConvergenceReport, FixedPointConfig, LlnExperiment,
};
use crate::totals::{
    classify, integrate_totals, relative_residual, stationary_from, stationary_point,
    StationaryResult, TotalsState,
};

use config::{MacroMode, ScenarioConfig};
use output::{distribution_csv, macro_snapshots, table_csv, Artifacts, Snapshot};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DIMORPH_OUT";
const DEFAULT_OUT: &str = "dimorph-out";

#[derive(Debug, Parser)]
#[command(name = "dimorph", version, about = "Trait evolution in two-sex populations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: RunCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Ibm,
    Macro,
    Totals,
    Stationary,
    FixedPoint,
    Lln,
    Acceptance,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ibm => "ibm",
            Self::Macro => "macro",
            Self::Totals => "totals",
            Self::Stationary => "stationary",
            Self::FixedPoint => "fixed-point",
            Self::Lln => "lln",
            Self::Acceptance => "acceptance",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Exact stochastic simulation of the individual-based model.
    Ibm(RunArgs),
    /// Deterministic trait-distribution system.
    Macro(RunArgs),
    /// Classification and trajectory of the total masses.
    Totals(RunArgs),
    /// Stationary totals with a multi-start uniqueness probe.
    Stationary(RunArgs),
    /// Fixed point of the birth operator.
    FixedPoint(RunArgs),
    /// Replicas of the individual-based model against the deterministic limit.
    Lln(RunArgs),
    /// Reproduction checks.
    Acceptance(RunArgs),
}

impl RunCommand {
    pub fn split(&self) -> (Scenario, &RunArgs) {
        match self {
            Self::Ibm(a) => (Scenario::Ibm, a),
            Self::Macro(a) => (Scenario::Macro, a),
            Self::Totals(a) => (Scenario::Totals, a),
            Self::Stationary(a) => (Scenario::Stationary, a),
            Self::FixedPoint(a) => (Scenario::FixedPoint, a),
            Self::Lln(a) => (Scenario::Lln, a),
            Self::Acceptance(a) => (Scenario::Acceptance, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads for replica-level parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory. Defaults to the config's `output_dir`, then to
    /// `$DIMORPH_OUT`, then to `./dimorph-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{scenario} failed: {source:#}")]
    Runtime {
        scenario: &'static str,
        source: anyhow::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime { .. } => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(source: anyhow::Error) -> Self {
        Self::Runtime { scenario: "", source }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        Self::from(anyhow::Error::new(e))
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub out_dir: PathBuf,
    pub manifest: output::Manifest,
}

/// Parses `args` (including the program name), runs the scenario and
/// reports on stdout/stderr. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (scenario, args) = cli.command.split();
    match run(scenario, args) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!(
                "wrote {} files and manifest.json to {}",
                outcome.manifest.files.len(),
                outcome.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dimorph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(scenario: Scenario, args: &RunArgs) -> Result<Outcome, CliError> {
    let mut config = ScenarioConfig::load(&args.config)?;
    config.check_scenario(scenario.name())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let pool = match args.jobs {
        Some(0) => return Err(CliError::Config("--jobs: must be at least 1".into())),
        Some(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .context("building the worker pool")?,
        ),
        None => None,
    };
    let go = || -> Result<Outcome, CliError> {
        let mut artifacts = Artifacts::create(&out_dir)?;
        let summary = dispatch(scenario, &config, &mut artifacts)?;
        let manifest = artifacts.finish(scenario.name(), config.seed)?;
        if let Some(failure) = summary.failure {
            return Err(anyhow::anyhow!(failure).into());
        }
        let summary = summary.text;
        Ok(Outcome {
            summary,
            out_dir: out_dir.clone(),
            manifest,
        })
    };
    let result = match pool {
        Some(pool) => pool.install(go),
        None => go(),
    };
    result.map_err(|e| match e {
        CliError::Runtime { source, .. } => CliError::Runtime {
            scenario: scenario.name(),
            source,
        },
        other => other,
    })
}

/// What a scenario reports. A `failure` still gets its artifacts and
/// manifest written before the run exits nonzero.
struct Summary {
    text: String,
    failure: Option<String>,
}

fn dispatch(scenario: Scenario, config: &ScenarioConfig, out: &mut Artifacts) -> Result<Summary, CliError> {
    if scenario == Scenario::Acceptance {
        return run_acceptance(config, out);
    }
    let text = match scenario {
        Scenario::Totals => run_totals(config, out),
        Scenario::Stationary => run_stationary(config, out),
        Scenario::Macro => run_macro(config, out),
        Scenario::Ibm => run_ibm(config, out),
        Scenario::FixedPoint => run_fixed_point(config, out),
        Scenario::Lln => run_lln_scenario(config, out),
        Scenario::Acceptance => unreachable!("handled above"),
    }?;
    Ok(Summary { text, failure: None })
}

fn strict_rates(config: &ScenarioConfig, scenario: &str) -> Result<crate::rates::ConstantRates, CliError> {
    let r = config.rates(scenario)?;
    r.validate_strict()
        .map_err(|e| CliError::Config(format!("rates.{}", e.to_string().trim_start_matches("invalid parameters: "))))?;
    Ok(r)
}

#[derive(Serialize)]
struct FitSummary {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    points: usize,
}

impl From<LinearFit> for FitSummary {
    fn from(f: LinearFit) -> Self {
        Self {
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
            points: f.points,
        }
    }
}

fn stationary_fields(result: StationaryResult) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    match result {
        StationaryResult::Persistent { m_bar, f_bar, residual } => {
            (Some(m_bar), Some(f_bar), Some(m_bar / f_bar), Some(residual))
        }
        StationaryResult::ExtinctOnly => (None, None, None, None),
    }
}

fn run_totals(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let r = strict_rates(config, "totals")?;
    let settings = config.totals.clone().unwrap_or_default();
    if !(settings.m0 >= 0.0 && settings.f0 >= 0.0) {
        return Err(CliError::Config("totals: M0 and F0 must be non-negative".into()));
    }
    let class = classify(&r);
    let result = stationary_point(&r)?;
    let series = integrate_totals(TotalsState::new(settings.m0, settings.f0), &r, settings.t_end, settings.dt)?;

    // Exponential rate of approach: to the stationary point when it exists,
    // to zero otherwise.
    let times: Vec<f64> = series.iter().map(|(t, _)| *t).collect();
    let gaps: Vec<f64> = series
        .iter()
        .map(|(_, s)| match result {
            StationaryResult::Persistent { m_bar, f_bar, .. } => (s.m - m_bar).abs().max((s.f - f_bar).abs()),
            StationaryResult::ExtinctOnly => s.m + s.f,
        })
        .map(|g| if g > 1e-12 { g } else { 0.0 })
        .collect();
    let fit = log_linear_fit(&times, &gaps);
    let (m_bar, f_bar, a, residual) = stationary_fields(result);
    out.write(
        "totals.csv",
        &table_csv(&["time", "M", "F"], series.iter().map(|(t, s)| vec![*t, s.m, s.f]))?,
    )?;
    out.write_json(
        "totals.json",
        &json!({
            "classification": class,
            "M_bar": m_bar,
            "F_bar": f_bar,
            "A": a,
            "residual": residual,
            "fit_slope": fit.map(|f| f.slope),
            "fit": fit.map(FitSummary::from),
            "rates": r,
            "start": {"M0": settings.m0, "F0": settings.f0},
            "t_end": settings.t_end,
            "dt": settings.dt,
            "final": series.last().map(|(_, s)| s),
        }),
    )?;
    Ok(match result {
        StationaryResult::Persistent { m_bar, f_bar, .. } => format!(
            "{class:?}: (M, F) -> ({m_bar:.6}, {f_bar:.6}), rate {:.4}",
            fit.map(|f| f.slope).unwrap_or(f64::NAN)
        ),
        StationaryResult::ExtinctOnly => format!("{class:?}: only the trivial stationary point"),
    })
}

fn run_stationary(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let r = strict_rates(config, "stationary")?;
    let settings = config.totals.clone().unwrap_or_default();
    let result = stationary_point(&r)?;
    let (m_bar, f_bar, a, residual) = stationary_fields(result);
    let mut probe = serde_json::Value::Null;
    if let StationaryResult::Persistent { m_bar, f_bar, .. } = result {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let side = 10.0 * m_bar.max(f_bar);
        let (mut spread, mut worst_residual): (f64, f64) = (0.0, 0.0);
        for _ in 0..settings.starts {
            let start = TotalsState::new(
                side * (1.0 - rng.random::<f64>()),
                side * (1.0 - rng.random::<f64>()),
            );
            let s = stationary_from(&r, start)?;
            spread = spread.max((s.m - m_bar).abs().max((s.f - f_bar).abs()));
            worst_residual = worst_residual.max(relative_residual(s, &r));
        }
        probe = json!({"starts": settings.starts, "box": side, "max_spread": spread, "max_residual": worst_residual});
    }
    out.write_json(
        "stationary.json",
        &json!({
            "classification": classify(&r),
            "M_bar": m_bar,
            "F_bar": f_bar,
            "A": a,
            "residual": residual,
            "probe": probe,
            "rates": r,
        }),
    )?;
    Ok(match (m_bar, f_bar) {
        (Some(m), Some(f)) => format!("stationary point ({m:.10}, {f:.10}), residual {:.1e}", residual.unwrap_or(0.0)),
        _ => "no positive stationary point (extinction regime)".into(),
    })
}

#[derive(Serialize)]
struct SnapshotSummary {
    t: f64,
    mass_first: f64,
    mass_second: f64,
    mean_first: Option<f64>,
    mean_second: Option<f64>,
}

fn summarize(states: &[MacroState]) -> Vec<SnapshotSummary> {
    states
        .iter()
        .map(|s| SnapshotSummary {
            t: s.t,
            mass_first: s.m.total_mass(),
            mass_second: s.f.total_mass(),
            mean_first: s.m.mean().ok(),
            mean_second: s.f.mean().ok(),
        })
        .collect()
}

fn distances_csv(report: &ConvergenceReport) -> anyhow::Result<Vec<u8>> {
    table_csv(
        &["time", "d_mu", "d_nu", "d_max", "d_pair"],
        (0..report.times.len()).map(|i| {
            vec![
                report.times[i],
                report.mu_distance[i],
                report.nu_distance[i],
                report.max_distance[i],
                report.pair_distance[i],
            ]
        }),
    )
}

/// Fixed point reached from `start`, or the reason it could not be computed.
fn reference_law(
    kernel: &InheritanceKernel,
    start: &GridMeasure,
    fp: &FixedPointConfig,
) -> (Option<GridMeasure>, Option<String>) {
    match fixed_point(kernel, start, fp) {
        Ok(r) => (Some(r.mu_star), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn run_macro(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let grid = config.grid("macro")?;
    let rates = config.rates("macro")?;
    let kernel = config.kernel("macro")?;
    let (m0, f0) = config.initial("macro", grid)?;
    let solver = config.solver("macro")?;
    let fp = config.fixed_point_config()?;
    let mode = config.macro_run.as_ref().map(|m| m.mode).unwrap_or_default();

    match mode {
        MacroMode::Full => {
            let model = MacroModel::new(rates.into(), &kernel, grid)?;
            let traj = integrate(&MacroState { t: 0.0, m: m0, f: f0 }, &model, &solver)?;
            out.write("trajectory.csv", &distribution_csv(&macro_snapshots(&traj.snapshots, ["male", "female"]))?)?;
            out.write_json(
                "summary.json",
                &json!({
                    "mode": "full",
                    "components": ["male", "female"],
                    "diagnostics": traj.diagnostics,
                    "snapshots": summarize(&traj.snapshots),
                }),
            )?;
            let last = traj.last();
            Ok(format!(
                "t = {}: masses (M, F) = ({:.6}, {:.6}) after {} steps",
                last.t,
                last.m.total_mass(),
                last.f.total_mass(),
                traj.diagnostics.steps
            ))
        }
        MacroMode::Normalized => {
            let a = config
                .macro_run
                .as_ref()
                .and_then(|m| m.sex_ratio)
                .ok_or_else(|| CliError::Config("macro.A: required in normalized mode".into()))?;
            if !(a > 0.0 && a.is_finite()) {
                return Err(CliError::Config(format!("macro.A: must be positive, got {a}")));
            }
            let (mu0, _) = m0.normalize().map_err(|e| CliError::Config(format!("initial.male: {e}")))?;
            let (nu0, _) = f0.normalize().map_err(|e| CliError::Config(format!("initial.female: {e}")))?;
            let op = BirthOperator::new(&kernel, grid)?;
            let traj = integrate_normalized(&mu0, &nu0, &SexRatio::Constant(a), &op, &solver)?;
            // The flow keeps A m + n fixed, so the limit law has the mean of
            // this mixture.
            let (mu_star, fp_error) = reference_law(&kernel, &mu0.mix(&nu0, 1.0 / (1.0 + a))?, &fp);
            let report = match &mu_star {
                Some(star) => {
                    let report = convergence_report(&traj.snapshots, star)?;
                    out.write("distances.csv", &distances_csv(&report)?)?;
                    out.write("mu_star.csv", &distribution_csv(&[Snapshot {
                        time: traj.last().t,
                        components: vec![("mu_star", star)],
                    }])?)?;
                    Some(report)
                }
                None => None,
            };
            out.write("trajectory.csv", &distribution_csv(&macro_snapshots(&traj.snapshots, ["mu", "nu"]))?)?;
            out.write_json(
                "summary.json",
                &json!({
                    "mode": "normalized",
                    "A": a,
                    "components": ["mu", "nu"],
                    "diagnostics": traj.diagnostics,
                    "limiting_mean": crate::stability::limiting_mean(a, mu0.mean()?, nu0.mean()?),
                    "fixed_point_error": fp_error,
                    "convergence": report,
                    "snapshots": summarize(&traj.snapshots),
                }),
            )?;
            let last = traj.last();
            Ok(format!(
                "t = {}: means (mu, nu) = ({:.6}, {:.6}){}",
                last.t,
                last.m.mean()?,
                last.f.mean()?,
                report
                    .and_then(|r| r.max_distance.last().copied())
                    .map(|d| format!(", distance to the fixed point {d:.2e}"))
                    .unwrap_or_default()
            ))
        }
        MacroMode::Coupled => {
            let model = MacroModel::new(rates.into(), &kernel, grid)?;
            let run = coupled_full_run(&m0, &f0, &model, &solver, None)?;
            let terminal = &run.normalized.last().expect("at least the initial snapshot").m;
            let (mu_star, fp_error) = reference_law(&kernel, terminal, &fp);
            let report = match &mu_star {
                Some(star) => {
                    let report = convergence_report(&run.normalized, star)?;
                    out.write("distances.csv", &distances_csv(&report)?)?;
                    Some(report)
                }
                None => None,
            };
            let target = match stationary_point(&rates) {
                Ok(StationaryResult::Persistent { m_bar, f_bar, .. }) => Some(m_bar / f_bar),
                _ => None,
            };
            let ratio_fit = target.and_then(|a| {
                let (ts, gaps): (Vec<f64>, Vec<f64>) =
                    run.sex_ratio.iter().map(|(t, v)| (*t, (v - a).abs())).filter(|(_, g)| *g > 1e-12).unzip();
                log_linear_fit(&ts, &gaps)
            });
            out.write("trajectory.csv", &distribution_csv(&macro_snapshots(&run.raw.snapshots, ["male", "female"]))?)?;
            out.write("normalized.csv", &distribution_csv(&macro_snapshots(&run.normalized, ["mu", "nu"]))?)?;
            out.write(
                "sex_ratio.csv",
                &table_csv(
                    &["time", "A", "rescaled_time"],
                    run.sex_ratio.iter().zip(&run.rescaled_times).map(|((t, a), tau)| vec![*t, *a, *tau]),
                )?,
            )?;
            out.write_json(
                "summary.json",
                &json!({
                    "mode": "coupled",
                    "components": ["male", "female"],
                    "diagnostics": run.raw.diagnostics,
                    "A_limit": target,
                    "A_fit": ratio_fit.map(FitSummary::from),
                    "fixed_point_error": fp_error,
                    "convergence": report,
                    "snapshots": summarize(&run.raw.snapshots),
                }),
            )?;
            let (_, a_end) = run.sex_ratio.last().copied().unwrap_or((0.0, f64::NAN));
            Ok(format!(
                "A(t_end) = {a_end:.6}{}",
                target.map(|a| format!(" (limit {a:.6})")).unwrap_or_default()
            ))
        }
    }
}

fn run_ibm(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let grid = config.grid("ibm")?;
    let rates = config.rates("ibm")?;
    let kernel = config.kernel("ibm")?;
    let (m0, f0) = config.initial("ibm", grid)?;
    let settings = config.ibm("ibm")?;
    let sample_times = if settings.sample_times.is_empty() {
        vec![0.0, settings.t_end]
    } else {
        settings.sample_times.clone()
    };
    let params = IbmParams {
        rates: rates.into(),
        kernel,
        grid,
        scale: settings.scale,
        t_end: settings.t_end,
        sample_times,
        seed: config.seed,
        max_events: settings.max_events,
    };
    let start = initial_population(&m0, &f0, settings.scale)?;
    let traj = simulate(&params, &start)?;
    let snapshots: Vec<Snapshot> = traj
        .snapshots
        .iter()
        .map(|s| Snapshot::pair(s.t, ("female", &s.females), ("male", &s.males)))
        .collect();
    out.write("ibm.csv", &distribution_csv(&snapshots)?)?;
    let sizes: Vec<serde_json::Value> = traj
        .snapshots
        .iter()
        .map(|s| json!({"t": s.t, "females": s.n_females, "males": s.n_males}))
        .collect();
    out.write_json(
        "ibm.json",
        &json!({
            "seed": config.seed,
            "scale": settings.scale,
            "t_end": settings.t_end,
            "rates": rates,
            "counts": traj.counts,
            "clamped": traj.counts.clamped,
            "initial_size": traj.initial_size,
            "final_size": traj.final_size,
            "extinct_at": traj.extinct_at,
            "frozen_at": traj.frozen_at,
            "truncated": traj.truncated,
            "snapshots": sizes,
        }),
    )?;
    Ok(format!(
        "{} births, {} deaths, population {} -> {}{}",
        traj.counts.births,
        traj.counts.deaths,
        traj.initial_size,
        traj.final_size,
        traj.extinct_at.map(|t| format!(", extinct at t = {t:.3}")).unwrap_or_default()
    ))
}

fn run_fixed_point(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let grid = config.grid("fixed-point")?;
    let kernel = config.kernel("fixed-point")?;
    let fp = config.fixed_point_config()?;
    let initial = config
        .fixed_point
        .as_ref()
        .and_then(|s| s.initial.as_ref())
        .ok_or_else(|| CliError::Config("fixed_point.initial: required by `fixed-point`".into()))?;
    let mu0 = config.shape(initial, grid, "fixed_point.initial")?;
    let result = fixed_point(&kernel, &mu0, &fp)?;
    let op = BirthOperator::new(&kernel, grid)?;
    let residual = op.apply(&result.mu_star, &result.mu_star)?.wasserstein1(&result.mu_star)?;
    out.write(
        "mu_star.csv",
        &distribution_csv(&[Snapshot {
            time: 0.0,
            components: vec![("mu_star", &result.mu_star)],
        }])?,
    )?;
    out.write(
        "steps.csv",
        &table_csv(
            &["iteration", "step_distance"],
            result.steps.iter().enumerate().map(|(i, d)| vec![(i + 1) as f64, *d]),
        )?,
    )?;
    out.write_json(
        "fixed_point.json",
        &json!({
            "iterations": result.iterations,
            "final_step_distance": result.final_step_distance,
            "residual": residual,
            "mean": result.mean,
            "variance": result.variance,
            "damped": result.damped,
            "initial_mean": mu0.mean()?,
            "tol": fp.tol,
        }),
    )?;
    Ok(format!(
        "fixed point after {} iterations: mean {:.6}, variance {:.6}, residual {residual:.1e}",
        result.iterations, result.mean, result.variance
    ))
}

fn run_lln_scenario(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let grid = config.grid("lln")?;
    let rates = config.rates("lln")?;
    let kernel = config.kernel("lln")?;
    let (m0, f0) = config.initial("lln", grid)?;
    let settings = config.lln("lln")?;
    let exp = LlnExperiment {
        rates: rates.into(),
        kernel,
        grid,
        m0,
        f0,
        scales: settings.scales.clone(),
        replicas: settings.replicas,
        checkpoints: settings.checkpoints.clone(),
        dt: settings.dt,
        seed: config.seed,
    };
    let report = run_lln(&exp)?;
    out.write(
        "lln.csv",
        &table_csv(
            &["scale", "time", "replicas", "mean_error", "spread", "std_error"],
            report.rows.iter().map(|r| {
                vec![r.scale as f64, r.time, r.replicas as f64, r.mean_error, r.spread, r.std_error]
            }),
        )?,
    )?;
    out.write(
        "reference.csv",
        &distribution_csv(&macro_snapshots(&report.reference.snapshots, ["male", "female"]))?,
    )?;
    let counts: Vec<serde_json::Value> = report
        .counts
        .iter()
        .map(|(scale, c)| json!({"scale": scale, "replicas": c}))
        .collect();
    out.write_json(
        "lln.json",
        &json!({
            "seed": config.seed,
            "rows": report.rows,
            "counts": counts,
        }),
    )?;
    let largest = settings.scales.iter().max().copied().unwrap_or(0);
    let worst = report
        .rows
        .iter()
        .filter(|r| r.scale == largest)
        .map(|r| r.mean_error)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} rows; worst mean error at N = {largest}: {worst:.3e}",
        report.rows.len()
    ))
}

fn run_acceptance(config: &ScenarioConfig, out: &mut Artifacts) -> Result<Summary, CliError> {
    let only = config.acceptance.clone().unwrap_or_default().criteria;
    if let Some(bad) = only.iter().find(|id| !acceptance::CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(CliError::Config(format!("acceptance.criteria: unknown criterion {bad}")));
    }
    let verdicts = acceptance::run_all(&only);
    print!("{}", acceptance::format_table(&verdicts));
    out.write_json("acceptance.json", &verdicts)?;
    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    Ok(Summary {
        text: format!("all {} criteria passed", verdicts.len()),
        failure: (!failed.is_empty()).then(|| {
            format!(
                "{} of {} criteria failed ({failed:?}); verdicts in {}",
                failed.len(),
                verdicts.len(),
                out.root().join("acceptance.json").display()
            )
        }),
    })
}

//! The `replenish` command-line front end.
//!
//! Settings are layered: command-line flags override values from the
//! `--config` JSON file, which override per-command defaults. Every run
//! writes `resolved_config.json` next to its outputs; passing that file back
//! through `--config` reproduces the run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use crate::analytic::{
    complete_info_threshold, ergodic_threshold, solve_smooth_pasting, threshold_sensitivity_sign,
    CompleteInfoThreshold, ScalarProblem,
};
use crate::error::{Error, Result};
use crate::mc::{estimate_from_samples, path_costs, ControlledSystem};
use crate::pde::{
    convergence_study, convergence_table_csv, extract_policy, solve_stationary, solve_with_ambiguity, CostSpec, Grid,
    SolverConfig, ThresholdPolicy, DEFAULT_WENO_EPS,
};
use crate::regime::{estimate_chain, DischargeSeries, RegimeChain};
use crate::transport::{rates_for_chain, SedimentProperties};

#[derive(Debug, Parser)]
#[command(name = "replenish", version, about = "Sediment replenishment under random observations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a regime chain from a discharge record.
    Identify(Settings),
    /// Solve the optimality equation and extract the free boundary.
    Solve(Settings),
    /// Closed-form single-regime solution.
    Exact(Settings),
    /// Monte Carlo cost of a threshold policy.
    Simulate(Settings),
    /// Grid-refinement study against the closed form.
    Convergence(Settings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Identify,
    Solve,
    Exact,
    Simulate,
    Convergence,
}

/// One layer of settings. Absent fields fall through to the next layer.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    /// JSON config file (same keys as `resolved_config.json`).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Regime chain JSON.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Sediment properties JSON.
    #[arg(long)]
    pub props: Option<PathBuf>,
    /// Threshold policy CSV (`regime,q,Ybar`).
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Discharge record CSV (`timestamp,discharge_m3s`).
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Transport rate of a single-regime problem, 1/day.
    #[arg(long = "S")]
    #[serde(rename = "S")]
    pub s: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    /// Observation intensity, 1/day; fractions such as `1/7` are accepted.
    #[arg(long, value_parser = parse_fraction)]
    #[serde(deserialize_with = "fraction_opt")]
    pub lambda: Option<f64>,
    /// Upper end of an ambiguous intensity interval `[lambda, lambda_high]`.
    #[arg(long, value_parser = parse_fraction)]
    #[serde(deserialize_with = "fraction_opt")]
    pub lambda_high: Option<f64>,
    /// Grid vertices.
    #[arg(long)]
    pub n: Option<usize>,
    /// Pseudo-time step; omitted means a fraction of the CFL bound.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub weno_eps: Option<f64>,
    /// Discharge bin width, m³/s.
    #[arg(long)]
    pub width: Option<f64>,
    /// Number of discharge regimes.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<usize>>,
    /// Initial storage.
    #[arg(long)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub initial_regime: Option<usize>,
    /// Simulation horizon, days.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-path costs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub per_path: Option<bool>,
    #[arg(skip)]
    pub properties: Option<SedimentProperties>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { config: $hi.config, $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// Fieldwise `self` over `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        layer!(
            self, lower, chain, props, policy, series, out, s, delta, c, d, lambda, lambda_high, n, dt, t_end, tol,
            weno_eps, width, count, resolutions, y0, initial_regime, horizon, paths, seed, per_path, properties
        )
    }
}

/// Parses `0.25`, `1/7` or `1 / 7`.
pub fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number or fraction"));
    let v = match s.split_once('/') {
        Some((a, b)) => num(a)? / num(b)?,
        None => num(s)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn fraction_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => parse_fraction(&t).map(Some).map_err(serde::de::Error::custom),
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub chain: Option<PathBuf>,
    pub props: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(rename = "S")]
    pub s: Option<f64>,
    pub delta: f64,
    pub c: f64,
    pub d: f64,
    pub lambda: f64,
    pub lambda_high: Option<f64>,
    pub n: usize,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub tol: f64,
    pub weno_eps: f64,
    pub width: f64,
    pub count: usize,
    pub resolutions: Vec<usize>,
    pub y0: f64,
    pub initial_regime: usize,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub per_path: bool,
    pub properties: SedimentProperties,
}

impl RunConfig {
    pub fn costs(&self) -> CostSpec {
        CostSpec { delta: self.delta, c: self.c, d: self.d, lambda: self.lambda }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { dt: self.dt, t_end: self.t_end, tol: self.tol, weno_eps: self.weno_eps }
    }

    fn scalar_problem(&self) -> Result<ScalarProblem> {
        let s = self.s.ok_or_else(|| Error::Input("the single-regime problem needs --S".into()))?;
        ScalarProblem::new(s, self.delta, self.c, self.d, self.lambda)
    }
}

/// Realistic-case values: sediment properties, costs and discretization.
pub fn default_realistic_config() -> RunConfig {
    RunConfig {
        command: CommandKind::Solve,
        chain: None,
        props: None,
        policy: None,
        series: None,
        out: PathBuf::from("replenish-out"),
        s: None,
        delta: 0.2,
        c: 0.02,
        d: 0.01,
        lambda: 1.0 / 7.0,
        lambda_high: None,
        n: 301,
        dt: Some(2.5e-5),
        t_end: 90.0,
        tol: 1e-9,
        weno_eps: DEFAULT_WENO_EPS,
        width: 2.5,
        count: 43,
        resolutions: vec![51, 101, 201, 401, 801],
        y0: 1.0,
        initial_regime: 0,
        horizon: 200.0,
        paths: 10_000,
        seed: 0,
        per_path: false,
        properties: SedimentProperties::default(),
    }
}

/// Single-regime benchmark used by `exact` and `convergence`.
fn benchmark_config() -> RunConfig {
    RunConfig {
        command: CommandKind::Exact,
        s: Some(0.05),
        delta: 0.2,
        c: 0.2,
        d: 0.3,
        dt: Some(1.0 / 800.0),
        t_end: 365.0 / 2.0,
        tol: 1e-10,
        ..default_realistic_config()
    }
}

fn defaults(command: CommandKind) -> RunConfig {
    let base = match command {
        CommandKind::Exact | CommandKind::Convergence => benchmark_config(),
        _ => default_realistic_config(),
    };
    RunConfig { command, ..base }
}

/// Failure of a CLI invocation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

/// Layers flags over the config file over the command's defaults and
/// checks that referenced input files exist.
pub fn resolve(command: CommandKind, flags: Settings) -> std::result::Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(obj) = value.as_object_mut() {
                obj.remove("command");
            }
            serde_json::from_value::<Settings>(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Settings::default(),
    };
    let s = flags.over(file);
    let base = defaults(command);
    for p in [&s.chain, &s.props, &s.policy, &s.series].into_iter().flatten() {
        if !p.exists() {
            return Err(CliError::Config(format!("input file {} does not exist", p.display())));
        }
    }
    let properties = match (&s.props, s.properties) {
        (Some(path), _) => SedimentProperties::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        (None, Some(p)) => p,
        (None, None) => base.properties,
    };
    Ok(RunConfig {
        command,
        chain: s.chain,
        props: s.props,
        policy: s.policy,
        series: s.series,
        out: s.out.unwrap_or(base.out),
        s: s.s.or(base.s),
        delta: s.delta.unwrap_or(base.delta),
        c: s.c.unwrap_or(base.c),
        d: s.d.unwrap_or(base.d),
        lambda: s.lambda.unwrap_or(base.lambda),
        lambda_high: s.lambda_high,
        n: s.n.unwrap_or(base.n),
        dt: s.dt.or(base.dt),
        t_end: s.t_end.unwrap_or(base.t_end),
        tol: s.tol.unwrap_or(base.tol),
        weno_eps: s.weno_eps.unwrap_or(base.weno_eps),
        width: s.width.unwrap_or(base.width),
        count: s.count.unwrap_or(base.count),
        resolutions: s.resolutions.unwrap_or(base.resolutions),
        y0: s.y0.unwrap_or(base.y0),
        initial_regime: s.initial_regime.unwrap_or(base.initial_regime),
        horizon: s.horizon.unwrap_or(base.horizon),
        paths: s.paths.unwrap_or(base.paths),
        seed: s.seed.unwrap_or(base.seed),
        per_path: s.per_path.unwrap_or(base.per_path),
        properties,
    })
}

/// Writes through a temporary file in the same directory and renames it.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn to_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Chain and rates: from the chain file and sediment properties, or a
/// single regime with rate `S`.
fn load_system(cfg: &RunConfig) -> Result<(RegimeChain, Vec<f64>)> {
    match (&cfg.chain, cfg.s) {
        (Some(path), _) => {
            let chain = RegimeChain::load(path)?;
            let rates = rates_for_chain(&chain, &cfg.properties)?;
            Ok((chain, rates))
        }
        (None, Some(s)) => Ok((RegimeChain::single(1.0)?, vec![s])),
        (None, None) => Err(Error::Input("give --chain or a single-regime rate --S".into())),
    }
}

#[derive(Serialize)]
struct SmoothReport {
    ybar: f64,
    psi1: f64,
    a: f64,
    b: f64,
    f: f64,
    value_at_empty: f64,
    value_at_full: f64,
    complete_information: Option<CompleteInfoThreshold>,
    sensitivity_sign: Option<i32>,
}

#[derive(Serialize)]
struct ErgodicReport {
    ybar: f64,
    u: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    stats: &'a crate::pde::SolveStats,
    thresholds: Option<&'a [f64]>,
}

/// Runs a resolved configuration, writes its artifacts into `cfg.out` and
/// returns the text for standard output.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    std::fs::create_dir_all(&cfg.out)?;
    let out = cfg.out.as_path();
    write_atomic(out, "resolved_config.json", to_json(cfg)?.as_bytes())?;
    match cfg.command {
        CommandKind::Identify => {
            let path = cfg.series.as_ref().ok_or_else(|| Error::Input("identify needs --series".into()))?;
            let series = DischargeSeries::load(path)?;
            let est = estimate_chain(&series, cfg.width, cfg.count)?;
            let rates = rates_for_chain(&est.chain, &cfg.properties)?;
            write_atomic(out, "chain.json", est.chain.to_json()?.as_bytes())?;
            write_atomic(out, "identification.json", to_json(&est)?.as_bytes())?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["regime", "q", "S"])?;
            for (i, (q, s)) in est.chain.discharges().iter().zip(&rates).enumerate() {
                w.write_record([i.to_string(), q.to_string(), s.to_string()])?;
            }
            write_atomic(out, "rates.csv", &w.into_inner().map_err(|e| e.into_error())?)?;
            Ok(format!(
                "{} regimes from {} samples; {} unvisited\n",
                est.chain.count(),
                series.len(),
                est.unvisited.len()
            ))
        }
        CommandKind::Solve => {
            let (chain, rates) = load_system(cfg)?;
            let grid = Grid::new(cfg.n)?;
            let result = match cfg.lambda_high {
                Some(hi) => solve_with_ambiguity(&chain, &rates, &cfg.costs(), (cfg.lambda, hi), &grid, &cfg.solver())?,
                None => solve_stationary(&chain, &rates, &cfg.costs(), &grid, &cfg.solver())?,
            };
            write_atomic(out, "value_field.csv", result.field.to_csv()?.as_bytes())?;
            let policy = extract_policy(&result.field)?;
            write_atomic(out, "free_boundary.csv", policy.to_csv(chain.discharges())?.as_bytes())?;
            let report = SolveReport { stats: &result.stats, thresholds: Some(&policy.boundaries) };
            let text = to_json(&report)?;
            write_atomic(out, "solve_stats.json", text.as_bytes())?;
            Ok(text)
        }
        CommandKind::Exact => {
            let p = cfg.scalar_problem()?;
            let text = if p.delta > 0.0 {
                let sol = solve_smooth_pasting(&p)?;
                to_json(&SmoothReport {
                    ybar: sol.ybar,
                    psi1: sol.psi1,
                    a: sol.a,
                    b: sol.b,
                    f: sol.f,
                    value_at_empty: sol.value(0.0),
                    value_at_full: sol.value(1.0),
                    complete_information: complete_info_threshold(p.s, p.c, p.d).ok(),
                    sensitivity_sign: threshold_sensitivity_sign(p.s, p.c, p.d, p.lambda).ok(),
                })?
            } else {
                let e = ergodic_threshold(p.s, p.c, p.d, p.lambda)?;
                to_json(&ErgodicReport { ybar: e.ybar, u: e.u, degenerate: e.degenerate })?
            };
            write_atomic(out, "exact.json", text.as_bytes())?;
            Ok(text)
        }
        CommandKind::Simulate => {
            let (chain, rates) = load_system(cfg)?;
            let policy = match &cfg.policy {
                Some(path) => ThresholdPolicy::load(path)?,
                None => return Err(Error::Input("simulate needs --policy".into())),
            };
            let sys = ControlledSystem { chain: &chain, rates: &rates, policy: Some(&policy), costs: cfg.costs() };
            let samples = path_costs(&sys, cfg.y0, cfg.initial_regime, cfg.horizon, cfg.paths, cfg.seed)?;
            let estimate = estimate_from_samples(&samples, cfg.horizon, cfg.delta)?;
            if cfg.per_path {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["path", "cost"])?;
                for (k, v) in samples.iter().enumerate() {
                    w.write_record([k.to_string(), v.to_string()])?;
                }
                write_atomic(out, "path_costs.csv", &w.into_inner().map_err(|e| e.into_error())?)?;
            }
            let text = to_json(&estimate)?;
            write_atomic(out, "cost_estimate.json", text.as_bytes())?;
            Ok(text)
        }
        CommandKind::Convergence => {
            let rows = convergence_study(&cfg.scalar_problem()?, &cfg.resolutions, &cfg.solver())?;
            let text = convergence_table_csv(&rows)?;
            write_atomic(out, "convergence.csv", text.as_bytes())?;
            Ok(text)
        }
    }
}

/// Parses arguments, runs, prints, and maps failures to exit codes:
/// 2 for usage or configuration problems, 1 for failures inside a run.
pub fn main_from_args<I, T>(args: I) -> ExitCode
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
    let (kind, settings) = match cli.command {
        Command::Identify(s) => (CommandKind::Identify, s),
        Command::Solve(s) => (CommandKind::Solve, s),
        Command::Exact(s) => (CommandKind::Exact, s),
        Command::Simulate(s) => (CommandKind::Simulate, s),
        Command::Convergence(s) => (CommandKind::Convergence, s),
    };
    match resolve(kind, settings).and_then(|cfg| Ok(execute(&cfg)?)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("replenish: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}

//! `gmips`: generate logged data, evaluate estimators, run sweeps, select
//! embedding dimensions with SLOPE, verify the exact oracle and plot results.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gmips_core::dataset::{load_dataset, save_dataset};
use gmips_core::estimators::{evaluate_estimators, run_estimator, WeightCache};
use gmips_core::oracle::verify_all;
use gmips_core::plot::emit_plots;
use gmips_core::slope::DEFAULT_DELTA;
use gmips_core::sweep::{run_sweep, SweepConfig};
use gmips_core::synth::generate_log;
use gmips_core::{parse_estimator, EstimatorSpec, ExperimentConfig, LoggedDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stdout line that propagates write failures instead of panicking.
macro_rules! out {
    ($($t:tt)*) => {
        writeln!(io::stdout().lock(), $($t)*)?
    };
}

/// Marks an error as a configuration problem (exit code 1).
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "gmips",
    version,
    about = "Off-policy evaluation of ranking policies with embedding-marginalized weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one logged dataset and save it in the binary container format.
    Generate(GenerateArgs),
    /// Monte Carlo evaluation of estimators, or estimates on a saved dataset.
    Evaluate(EvaluateArgs),
    /// Run a parameter sweep and write the results CSV.
    Sweep(SweepArgs),
    /// Choose retained embedding dimensions with SLOPE and print the audit.
    Slope(SlopeArgs),
    /// Check every closed-form identity against exact enumeration.
    OracleVerify(VerifyArgs),
    /// Render SVG charts from a results CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment TOML file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n=500 --set reward.behavior=cascade`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Environment seed (same as `--set seed=...`).
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per dataset (same as `--set n=...`).
    #[arg(long)]
    n: Option<usize>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path, ExperimentConfig::from_toml)?,
            None => ExperimentConfig::default(),
        };
        let mut sets = self.overrides.clone();
        sets.extend(self.seed.map(|s| format!("seed={s}")));
        sets.extend(self.n.map(|n| format!("n={n}")));
        for s in &sets {
            cfg.set(s)?;
        }
        Ok(cfg)
    }
}

fn read_config<T>(path: &Path, parse: impl Fn(&str) -> gmips_core::Result<T>) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    Ok(parse(&text)?)
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Seed for drawing the samples; defaults to the environment seed.
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated estimator labels, e.g. `MSIPS,snSIPS,MRIPS+slope`.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "snSIPS,snIIPS,snRIPS,MSIPS,MIIPS,MRIPS"
    )]
    estimators: Vec<String>,
    /// Estimate on this saved dataset instead of running replications.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 2024)]
    root_seed: u64,
    /// Atoms for exact evaluation or draws for Monte Carlo.
    #[arg(long, default_value_t = 1_000_000)]
    value_budget: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    slope_delta: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep TOML file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a sweep key, e.g. `--set replications=50 --set base.n=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, short)]
    out: PathBuf,
    /// Per-value wall-clock seconds; kept apart so the results stay reproducible.
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Also render charts into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Saved dataset; a fresh one is drawn from the experiment otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Marginal family, optionally capped, e.g. `MRIPS` or `MSIPS@4`.
    #[arg(long, default_value = "MRIPS")]
    estimator: String,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seeds of the tiny environments.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_specs(labels: &[String], positions: usize, delta: f64) -> Result<Vec<EstimatorSpec>> {
    labels
        .iter()
        .map(|l| parse_estimator(l.trim(), positions, delta).map_err(anyhow::Error::from))
        .collect()
}

fn draw(cfg: &ExperimentConfig, data_seed: Option<u64>) -> Result<LoggedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed.unwrap_or(cfg.seed));
    Ok(generate_log(cfg, &mut rng)?)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let cfg = args.experiment.load()?;
    let ds = draw(&cfg, args.data_seed)?;
    save_dataset(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    out!(
        "wrote {} samples (K={}, D={}) to {}",
        ds.len(),
        ds.positions(),
        ds.dims(),
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    if let Some(path) = &args.data {
        let ds = load_dataset(path).with_context(|| format!("reading {}", path.display()))?;
        let specs = parse_specs(&args.estimators, ds.positions(), args.slope_delta)?;
        out!("estimator,value,selected_dims");
        for (label, spec) in args.estimators.iter().zip(&specs) {
            let out = run_estimator(&ds, spec)?;
            let dims = out.selected_dims.map(|d| d.to_string()).unwrap_or_default();
            out!("{},{},{dims}", label.trim(), out.report.value);
        }
        return Ok(());
    }
    let cfg = args.experiment.load()?;
    let specs = parse_specs(&args.estimators, cfg.positions, args.slope_delta)?;
    if args.replications < 2 {
        return Err(config_err("replications must be at least 2"));
    }
    let eval = evaluate_estimators(
        &specs,
        args.replications,
        &cfg,
        args.root_seed,
        args.value_budget,
    )?;
    out!(
        "# true value {} (se {}, {:?}), fingerprint {}",
        eval.value.value,
        eval.value.std_error,
        eval.value.mode,
        cfg.fingerprint()
    );
    out!("estimator,mean_estimate,relative_bias,squared_bias,variance,mse,failures");
    for (label, o) in args.estimators.iter().zip(&eval.outcomes) {
        let s = &o.summary;
        out!(
            "{},{},{},{},{},{},{}",
            label.trim(),
            s.mean_estimate,
            s.bias,
            s.squared_bias,
            s.variance,
            s.mse,
            o.failures()
        );
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_config(path, SweepConfig::from_toml)?,
        None => SweepConfig::default(),
    };
    for s in &args.overrides {
        cfg.set(s)?;
    }
    let res = run_sweep(&cfg)?;
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    res.write_csv(std::io::BufWriter::new(file))?;
    let timing = res.timing_csv();
    match &args.timing {
        Some(path) => {
            std::fs::write(path, timing).with_context(|| format!("writing {}", path.display()))?
        }
        None => eprint!("{timing}"),
    }
    eprintln!("wrote {} rows to {}", res.rows.len(), args.out.display());
    if let Some(dir) = &args.plots {
        let written = emit_plots(&args.out, dir)?;
        eprintln!("wrote {} charts to {}", written.len(), dir.display());
    }
    Ok(())
}

fn slope(args: &SlopeArgs) -> Result<()> {
    let ds = match &args.data {
        Some(path) => load_dataset(path).with_context(|| format!("reading {}", path.display()))?,
        None => draw(&args.experiment.load()?, None)?,
    };
    let mut spec = parse_estimator(&args.estimator, ds.positions(), args.delta)?;
    if !spec.family.is_marginal() {
        return Err(config_err(format!(
            "SLOPE needs a marginal family, got '{}'",
            args.estimator
        )));
    }
    spec.slope_delta = Some(args.delta);
    let report = WeightCache::new(&ds).slope(&spec)?;
    if args.json {
        out!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        out!(
            "selected retained_dims {} (estimate {})",
            report.retained_dims,
            report.report.value
        );
        out!("retained_dims,estimate,cnf");
        for c in &report.candidates {
            out!("{},{},{}", c.retained_dims, c.estimate, c.cnf);
        }
        write!(io::stdout().lock(), "{}", report.outcome.audit_text())?;
    }
    Ok(())
}

fn oracle_verify(args: &VerifyArgs) -> Result<()> {
    if args.seeds.is_empty() {
        return Err(config_err("need at least one seed"));
    }
    let checks = verify_all(&args.seeds)?;
    let mut failed = 0;
    for c in &checks {
        failed += usize::from(!c.passed());
        out!(
            "{} {}: max deviation {:.3e} (tolerance {:.0e}, {} cases)",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.max_deviation,
            c.tolerance,
            c.cases
        );
    }
    if failed > 0 {
        bail!("{failed} oracle checks failed");
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<()> {
    let written = emit_plots(&args.results, &args.out)?;
    for p in written {
        out!("{}", p.display());
    }
    Ok(())
}

fn is_config_error(err: &anyhow::Error) -> bool {
    use gmips_core::Error as E;
    err.chain().any(|cause| {
        cause.is::<ConfigError>()
            || matches!(
                cause.downcast_ref::<E>(),
                Some(E::Config(_) | E::UnknownEstimator(_) | E::UnknownBehavior(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Slope(a) => slope(a),
        Command::OracleVerify(a) => oracle_verify(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // a closed reader (e.g. `| head`) is not a failure
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<io::Error>()
                    .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}

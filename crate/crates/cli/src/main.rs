mod config;
mod describe;
mod engines;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use epilimit::model::ModelKind;

use config::{ConfigError, Engine, ExperimentConfig};
use output::{sha256_hex, Manifest, RunDir};

/// Bad invocation or environment, reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// The verify engine ran and its check failed (exit code 3).
#[derive(Debug)]
struct AcceptanceFailure(String);

impl fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acceptance check failed: {}", self.0)
    }
}

impl std::error::Error for AcceptanceFailure {}

#[derive(Parser)]
#[command(name = "epilimit", version, about = "Run epidemic simulations and their deterministic and Gaussian limits")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "EPILIMIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact agent-based simulation ensemble.
    Simulate(RunArgs),
    /// Deterministic (fluid) limit.
    Fluid(RunArgs),
    /// Sample paths of the Gaussian fluctuation limit.
    Fclt(RunArgs),
    /// Check the general solver against the Markovian ODE; exit 3 on failure.
    Verify(RunArgs),
    /// Closed-form equilibrium and its identities (SIS, SIRS).
    Equilibrium(RunArgs),
    /// Fit the convergence rate of simulations to the fluid limit.
    Rate(RunArgs),
    /// Run the engine named in the config's `engine` key.
    Run(RunArgs),
    /// Print a model's limit equations and required laws.
    Describe {
        /// SIS, SIR, SIRS or SEIR.
        kind: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,

    /// Parent directory for run directories.
    #[arg(long, env = "EPILIMIT_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<AcceptanceFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<epilimit::Error>() {
            return match e {
                epilimit::Error::NonConvergence { .. } | epilimit::Error::IndefiniteCovariance { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn select_engine(requested: Option<Engine>, cfg: &ExperimentConfig) -> Result<Engine> {
    match (requested, cfg.engine) {
        (Some(r), Some(c)) if r != c => Err(ConfigError {
            field: "engine".into(),
            reason: format!("config selects `{c}` but the `{r}` subcommand was used"),
        }
        .into()),
        (Some(r), _) => Ok(r),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(ConfigError {
            field: "engine".into(),
            reason: "`run` needs an engine key in the config".into(),
        }
        .into()),
    }
}

fn run_name(cfg: &ExperimentConfig, path: &Path) -> Result<String> {
    if let Some(name) = &cfg.output.name {
        return Ok(name.clone());
    }
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| UsageError(format!("cannot derive a run name from {}", path.display())).into())
}

fn execute(requested: Option<Engine>, args: &RunArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, bytes) = config::load(&args.config)?;
    let engine = select_engine(requested, &cfg)?;
    let base = args
        .output_dir
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let mut dir = RunDir::create(&base, &run_name(&cfg, &args.config)?, args.force, &cfg.output.formats)?;
    dir.raw("config.toml", &bytes)?;
    let outcome = match engine {
        Engine::Simulate => engines::simulate(&cfg, &mut dir),
        Engine::Fluid => engines::fluid(&cfg, &mut dir),
        Engine::Fclt => engines::fclt(&cfg, &mut dir),
        Engine::Verify => engines::verify(&cfg, &mut dir),
        Engine::Equilibrium => engines::equilibrium(&cfg, &mut dir),
        Engine::Rate => engines::rate(&cfg, &mut dir),
    }
    .with_context(|| format!("{engine} engine"))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        engine: engine.to_string(),
        config_file: args.config.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        seed: cfg.ensemble.seed,
        threads: rayon::current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
        status: if outcome.passed { "passed" } else { "failed" }.into(),
        artifacts: dir.artifacts().to_vec(),
    };
    dir.json("manifest.json", &manifest)?;
    println!("{engine}: {}", outcome.summary);
    println!("artifacts in {}", dir.path.display());
    if !outcome.passed {
        return Err(AcceptanceFailure(outcome.summary).into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (engine, args) = match &cli.command {
        Command::Describe { kind } => {
            let kind: ModelKind = kind
                .parse()
                .map_err(|_| UsageError(format!("unknown model kind `{kind}`; expected SIS, SIR, SIRS or SEIR")))?;
            print!("{}", describe::describe(kind));
            return Ok(());
        }
        Command::Simulate(a) => (Some(Engine::Simulate), a),
        Command::Fluid(a) => (Some(Engine::Fluid), a),
        Command::Fclt(a) => (Some(Engine::Fclt), a),
        Command::Verify(a) => (Some(Engine::Verify), a),
        Command::Equilibrium(a) => (Some(Engine::Equilibrium), a),
        Command::Rate(a) => (Some(Engine::Rate), a),
        Command::Run(a) => (None, a),
    };
    execute(engine, args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

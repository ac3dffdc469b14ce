//! Command-line front end: study dispatch, configuration handling, the
//! validation suite, and CSV report emission.
//!
//! Exit codes: 0 on success, 1 on configuration errors (the offending key
//! or file is named), 2 on runtime failures (including failed validation).

use clap::{Args, Parser, Subcommand};
use drmgfe::config::{self, ConfigError, Preset};
use drmgfe::fem::Dim;
use drmgfe::harness::{self, StudyAxis, StudyConfig};
use drmgfe::oracle;
use drmgfe::scheme::SchemeKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "drmgfe",
    about = "Drift-randomized Milstein-Galerkin finite element solver and \
             strong-convergence study harness for semilinear stochastic \
             evolution equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal strong-convergence study (fixed mesh, refining time steps).
    ConvergenceTime(StudyArgs),
    /// Spatial strong-convergence study (fixed time step, refining meshes).
    ConvergenceSpace(StudyArgs),
    /// Integrate one sample at the reference resolution and write the final
    /// nodal state.
    SingleRun(SingleRunArgs),
    /// Run the validation suite and print one pass/fail line per check.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Ini config file; replaces --dim/--preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension of the built-in preset (1 or 2).
    #[arg(long, default_value_t = 1)]
    dim: u8,
    /// Built-in preset tier: paper (published settings) or desk (bounded
    /// runtime).
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Scheme override: drmgfe or milstein.
    #[arg(long)]
    scheme: Option<String>,
    /// Master seed override (falls back to the SPDE_SEED env var).
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count override.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker thread count (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for the CSV report.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Print the fully resolved config and exit without running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SingleRunArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Which Monte Carlo sample to integrate.
    #[arg(long, default_value_t = 0)]
    sample_index: u64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Seed for the statistical checks.
    #[arg(long)]
    seed: Option<u64>,
}

enum AppError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<harness::HarnessError> for AppError {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::InvalidConfig(_) => AppError::Config(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

fn parse_dim(dim: u8) -> Result<Dim, AppError> {
    match dim {
        1 => Ok(Dim::One),
        2 => Ok(Dim::Two),
        other => Err(AppError::Config(format!("--dim must be 1 or 2, got {other}"))),
    }
}

fn seed_from_env() -> Result<Option<u64>, AppError> {
    match std::env::var("SPDE_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| AppError::Config(format!("SPDE_SEED must be a u64, got '{raw}'"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(AppError::Config(format!("SPDE_SEED unreadable: {e}"))),
    }
}

fn resolve_config(args: &StudyArgs, axis: StudyAxis) -> Result<StudyConfig, AppError> {
    let mut config = match &args.config {
        Some(path) => {
            let config = config::load(path)?;
            if config.axis_kind() != axis {
                return Err(AppError::Config(format!(
                    "config '{}' declares axis = {} but the subcommand runs a {} study",
                    path.display(),
                    config::axis_name(config.axis_kind()),
                    config::axis_name(axis)
                )));
            }
            config
        }
        None => config::preset(parse_dim(args.dim)?, axis, args.preset),
    };
    if let Some(scheme) = &args.scheme {
        config.scheme = match scheme.as_str() {
            "drmgfe" => SchemeKind::Drmgfe,
            "milstein" => SchemeKind::SemiImplicitMilstein,
            other => {
                return Err(AppError::Config(format!(
                    "--scheme must be 'drmgfe' or 'milstein', got '{other}'"
                )))
            }
        };
    }
    if let Some(seed) = args.seed.or(seed_from_env()?) {
        config.master_seed = seed;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    Ok(config)
}

fn configure_workers(workers: Option<usize>) -> Result<(), AppError> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(AppError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Runtime(format!("worker pool setup failed: {e}")))?;
    }
    Ok(())
}

fn run_convergence(args: &StudyArgs, axis: StudyAxis) -> Result<(), AppError> {
    let config = resolve_config(args, axis)?;
    if args.print_config {
        print!("{}", config::to_ini(&config));
        return Ok(());
    }
    configure_workers(args.workers)?;
    let report = harness::run_study(&config)?;

    println!("{:>14}  {:>14}  {:>8}", "resolution", "u_error", "EOC");
    for level in &report.levels {
        match level.eoc {
            Some(e) => println!(
                "{:>14e}  {:>14.6e}  {:>8.4}",
                level.resolution, level.u_error, e
            ),
            None => println!(
                "{:>14e}  {:>14.6e}  {:>8}",
                level.resolution, level.u_error, "--"
            ),
        }
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let filename = format!(
        "convergence-{}-{}d.csv",
        config::axis_name(axis),
        config.dim.as_usize()
    );
    let path = args.out.join(filename);
    harness::emit_csv(&report, &path)
        .map_err(|e| AppError::Runtime(format!("cannot write '{}': {e}", path.display())))?;
    println!("wrote {} ({:.1} s)", path.display(), report.wall_seconds);
    Ok(())
}

fn run_single(args: &SingleRunArgs) -> Result<(), AppError> {
    // A single run makes sense for either axis; default to the time layout
    // unless the config file says otherwise.
    let axis = match &args.study.config {
        Some(path) => config::load(path)?.axis_kind(),
        None => StudyAxis::Time,
    };
    let config = resolve_config(&args.study, axis)?;
    if args.study.print_config {
        print!("{}", config::to_ini(&config));
        return Ok(());
    }
    configure_workers(args.study.workers)?;
    let (space, state) = harness::single_run(&config, args.sample_index)?;

    let path = args
        .study
        .out
        .join(format!("state-{}d.csv", config.dim.as_usize()));
    let mut text = String::new();
    text.push_str("# final nodal state\n");
    text.push_str(&format!("# sample_index = {}\n", args.sample_index));
    text.push_str("# config-begin\n");
    for line in config::to_ini(&config).lines() {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str("# config-end\n");
    match config.dim {
        Dim::One => {
            text.push_str("x,value\n");
            for d in 0..space.dof_count() {
                let p = space.mesh().dof_point(d);
                text.push_str(&format!("{},{}\n", p[0], state.as_slice()[d]));
            }
        }
        Dim::Two => {
            text.push_str("x,y,value\n");
            for d in 0..space.dof_count() {
                let p = space.mesh().dof_point(d);
                text.push_str(&format!("{},{},{}\n", p[0], p[1], state.as_slice()[d]));
            }
        }
    }
    std::fs::write(&path, text)
        .map_err(|e| AppError::Runtime(format!("cannot write '{}': {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<(), AppError> {
    let seed = match args.seed {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(config::DEFAULT_MASTER_SEED),
    };
    let results = oracle::run_validation_suite(seed);
    let mut all_passed = true;
    for r in &results {
        println!("{r}");
        all_passed &= r.passed;
    }
    if all_passed {
        println!("{} checks passed", results.len());
        Ok(())
    } else {
        Err(AppError::Runtime(format!(
            "{} of {} validation checks failed",
            results.iter().filter(|r| !r.passed).count(),
            results.len()
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::ConvergenceTime(args) => run_convergence(args, StudyAxis::Time),
        Command::ConvergenceSpace(args) => run_convergence(args, StudyAxis::Space),
        Command::SingleRun(args) => run_single(args),
        Command::Validate(args) => run_validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(message)) => {
            eprintln!("config error: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

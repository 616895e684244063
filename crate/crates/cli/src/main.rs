//! `paradjoint`: runs, predicts and verifies parallel direct-adjoint loops.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 when a solver
//! fails or results cannot be written.

mod commands;
mod config;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paradjoint::{Algorithm, TimingProfile};

use commands::PredictRequest;
use config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(paradjoint::Error),
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) | CliError::Output(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(e) => write!(f, "solver failure: {e}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<paradjoint::Error> for CliError {
    fn from(e: paradjoint::Error) -> Self {
        CliError::Solver(e)
    }
}

#[derive(Parser)]
#[command(name = "paradjoint", version, about = "Parallel-in-time direct-adjoint loops")]
struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run a single worker count instead of the configured list.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for result files.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Validate and print the resolved plan without solving.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    repeats: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            workers: self.workers,
            output: self.output.clone(),
            repeats: self.repeats,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ParallelAlgorithm {
    Linear,
    Nonlinear,
    Hybrid,
}

impl From<ParallelAlgorithm> for Algorithm {
    fn from(a: ParallelAlgorithm) -> Self {
        match a {
            ParallelAlgorithm::Linear => Algorithm::Linear,
            ParallelAlgorithm::Nonlinear => Algorithm::Nonlinear,
            ParallelAlgorithm::Hybrid => Algorithm::Hybrid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Time the configured loops and write results.csv and summary.json.
    Run(Common),
    /// Predicted speedups from a measured or supplied timing profile.
    Predict {
        /// Measure the profile on this configuration's testbed.
        #[arg(long, conflicts_with = "profile", required_unless_present = "profile")]
        config: Option<PathBuf>,
        /// TimingProfile JSON, as written by `profile`.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, value_enum)]
        algorithm: Option<ParallelAlgorithm>,
        #[arg(long, default_value_t = 16)]
        max_workers: usize,
        /// Direct iterations of the iterative algorithm.
        #[arg(long, default_value_t = 4)]
        iterations: usize,
        /// Adjoint to direct cost ratio; defaults to the profile's own.
        #[arg(long)]
        hybrid_k: Option<f64>,
        /// Horizon used for the hybrid partition.
        #[arg(long, default_value_t = 1.0)]
        final_time: f64,
        /// The adjoint has a final condition (a non-last checkpoint segment).
        #[arg(long)]
        final_condition: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Parallel gradients against the serial high-accuracy reference.
    VerifyGradient {
        #[command(flatten)]
        common: Common,
        /// Also check this many seeded random components by central differences.
        #[arg(long, default_value_t = 0)]
        fd_components: usize,
    },
    /// Measure the kernel timing profile and write profile.json.
    Profile(Common),
}

fn read_profile(path: &PathBuf) -> Result<TimingProfile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let profile: TimingProfile = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())))?;
    profile.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(profile)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            if common.dry_run {
                return commands::dry_run(&cfg);
            }
            commands::run(&cfg)
        }
        Command::VerifyGradient { common, fd_components } => {
            let cfg = common.load()?;
            if common.dry_run {
                return commands::dry_run(&cfg);
            }
            commands::verify_gradient(&cfg, fd_components)
        }
        Command::Profile(common) => {
            let cfg = common.load()?;
            if common.dry_run {
                return commands::dry_run(&cfg);
            }
            let profile = commands::profile(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&profile).expect("profiles serialize"));
            commands::write_profile(&cfg, &profile)
        }
        Command::Predict {
            config,
            profile,
            algorithm,
            max_workers,
            iterations,
            hybrid_k,
            final_time,
            final_condition,
            output,
            repeats,
        } => {
            if max_workers == 0 {
                return Err(CliError::Config("--max-workers must be positive".into()));
            }
            let (profile, default_algorithm, t) = match (&config, &profile) {
                (_, Some(path)) => (read_profile(path)?, None, final_time),
                (Some(path), None) => {
                    let overrides = Overrides {
                        repeats,
                        ..Overrides::default()
                    };
                    let cfg = RunConfig::load(path, &overrides)?;
                    let p = commands::profile(&cfg)?;
                    (p, Some(cfg.algorithm), cfg.problem.final_time)
                }
                (None, None) => unreachable!("clap requires a profile source"),
            };
            let algorithm = algorithm
                .map(Algorithm::from)
                .or(default_algorithm)
                .ok_or_else(|| CliError::Config("--algorithm is required with --profile".into()))?;
            let rows = commands::predict(
                &profile,
                &PredictRequest {
                    algorithm,
                    max_workers,
                    iterations,
                    hybrid_k,
                    final_time: t,
                    final_condition,
                },
            )?;
            commands::print_predictions(&rows);
            if let Some(dir) = output {
                fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
                commands::write_csv(&dir.join("predict.csv"), &rows)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

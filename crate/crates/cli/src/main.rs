use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bounds;
mod commands;

use commands::Failure;

/// Overrides the default output directory.
pub const ENV_OUT_DIR: &str = "POLYSWEEP_OUT_DIR";
/// Overrides the default number of worker threads.
pub const ENV_THREADS: &str = "POLYSWEEP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "polysweep", version, about = "Controlled polyhedral sweeping processes")]
struct Cli {
    /// Output directory [env: POLYSWEEP_OUT_DIR, default: current directory]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the catching-up scheme and write trajectory CSVs plus a run report.
    Simulate {
        /// Scenario files, or `builtin:NAME`.
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Number of dyadic mesh levels; above 1 a convergence table is added.
        #[arg(long, default_value_t = 1)]
        mesh_levels: usize,
        /// Take the normals at the left node of each step.
        #[arg(long)]
        explicit: bool,
        /// Scenarios processed in parallel [env: POLYSWEEP_THREADS, default: 1]
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Randomized check of the truncation and error-bound inequalities.
    VerifyBounds {
        scenario: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Uniform Slater margin of the moving set over a refined grid.
    Slater {
        scenario: String,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 1)]
        refine: usize,
    },
    /// Solve the discrete optimal control problem of the scenario.
    Optimize {
        scenario: String,
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cost evaluations allowed.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Recover optimality multipliers for a solution file.
    CheckKkt { solution: PathBuf },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(ENV_OUT_DIR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn threads(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(t) = flag {
        return Ok(t.max(1));
    }
    match std::env::var(ENV_THREADS) {
        Ok(v) => v
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| Failure::usage(format!("{ENV_THREADS}={v:?} is not a count"))),
        Err(_) => Ok(1),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = out_dir(cli.out);
    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
    let out: &Path = &out;
    match cli.command {
        Command::Simulate {
            scenarios,
            mesh_levels,
            explicit,
            threads: t,
        } => commands::simulate(&scenarios, mesh_levels, explicit, threads(t)?, out),
        Command::VerifyBounds {
            scenario,
            samples,
            seed,
        } => commands::verify_bounds(&scenario, samples, seed, out),
        Command::Slater {
            scenario,
            radius,
            refine,
        } => commands::slater(&scenario, radius, refine, out),
        Command::Optimize {
            scenario,
            level,
            seed,
            budget,
        } => commands::optimize(&scenario, level, seed, budget, out),
        Command::CheckKkt { solution } => commands::check_kkt(&solution, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("polysweep: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

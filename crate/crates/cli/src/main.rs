//! `cpf`: twin experiments and verification suites for constrained particle
//! filters.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 filter
//! degeneracy, 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpf::analysis::verify::{run_suite, SUITES};
use cpf::experiment::{
    cmd_benchmark, cmd_filter, cmd_simulate, parse_kde_spec, Algorithm, ExperimentConfig, FilterCommand,
};
use cpf::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERACY: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "cpf", version, about = "Constrained particle filters for discretely observed diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParallelArg {
    Seq,
    Auto,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `run.parallelism`.
    #[arg(long, value_enum)]
    parallel: Option<ParallelArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth, H and observations.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a particle filter on simulated data.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Overrides `filter.algorithm`.
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Continue through weight degeneracy with uniform weights.
        #[arg(long)]
        paper_mode: bool,
        /// Marginal densities to export, as `coord:step,…` with coordinates
        /// counted from 1.
        #[arg(long)]
        kde: Option<String>,
    },
    /// Mean and standard deviation of the NMSE per (d_x, algorithm).
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Continue through weight degeneracy with uniform weights.
        #[arg(long)]
        paper_mode: bool,
    },
    /// Run a verification suite against its exact oracle.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "auto")]
        parallel: ParallelArg,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::InvalidConfig(_) => EXIT_CONFIG,
            _ if e.is_degeneracy() => EXIT_DEGENERACY,
            _ => EXIT_OTHER,
        };
        Self { code, message: e.to_string() }
    }
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, bool), Failure> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| Failure { code: EXIT_CONFIG, message: e.to_string() })?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let parallel = match common.parallel {
        Some(ParallelArg::Seq) => false,
        Some(ParallelArg::Auto) => true,
        None => cfg.parallel(),
    };
    Ok((cfg, parallel))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common } => {
            let (cfg, _) = load_config(&common)?;
            let data = cmd_simulate(&cfg, &common.out)?;
            println!(
                "simulated {} steps of d_x = {} (d_y = {}) into {}",
                data.steps(),
                cfg.model.state_dim(),
                cfg.d_y(),
                common.out.display()
            );
        }
        Command::Filter { common, data, algorithm, paper_mode, kde } => {
            let (mut cfg, parallel) = load_config(&common)?;
            if let Some(alg) = algorithm {
                cfg.filter.algorithm = alg;
            }
            let kde = match kde {
                Some(spec) => parse_kde_spec(&spec)?,
                None => Vec::new(),
            };
            let cmd = FilterCommand { paper_mode, parallel, kde };
            let outcome = cmd_filter(&cfg, &data, &common.out, &cmd)?;
            let r = &outcome.record;
            println!(
                "{}: {}/{} steps, NMSE {}, ESS min {:.2} mean {:.2}, fallback steps {}, {:.2}s",
                r.algorithm.name(),
                r.steps_completed,
                r.steps,
                fmt_opt(r.nmse),
                r.ess.min,
                r.ess.mean,
                r.fallback_steps,
                r.wall_time
            );
            if let Some(e) = outcome.error {
                return Err(e.into());
            }
        }
        Command::Benchmark { common, paper_mode } => {
            let (cfg, parallel) = load_config(&common)?;
            let rows = cmd_benchmark(&cfg, &common.out, paper_mode, parallel)?;
            println!("{:>6} {:<22} {:>5} {:>12} {:>12} {:>10}", "d_x", "algorithm", "reps", "mean_nmse", "std_nmse", "degenerate");
            for r in rows {
                println!(
                    "{:>6} {:<22} {:>5} {:>12.6} {:>12.6} {:>10}",
                    r.d_x,
                    r.algorithm.name(),
                    r.reps,
                    r.mean_nmse,
                    r.std_nmse,
                    r.degenerate_runs
                );
            }
        }
        Command::Verify { suite, seed, parallel } => {
            let report = run_suite(&suite, seed, matches!(parallel, ParallelArg::Auto))?;
            print!("{report}");
            if !report.passed() {
                return Err(Failure { code: EXIT_VERIFY, message: format!("suite {suite} failed") });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

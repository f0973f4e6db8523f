use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edge_admm::admm::DualStepMode;
use edge_admm::scenario::{
    exit_code_for, run_oracle_suite, run_scenario, validate, GapThresholds, RunFlags, Scenario, SuiteOptions,
    EXIT_CONFIG, EXIT_CONVERGED, EXIT_NOT_CONVERGED,
};

/// Distributed ADMM under edge agreements.
#[derive(Debug, Parser)]
#[command(name = "edge-admm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "EDGE_ADMM_OUT", default_value = "out")]
    out: PathBuf,
    /// Unit dual steps for both multiplier families.
    #[arg(long)]
    literal_dual_step: bool,
    /// Override the iteration budget (per MPC step for battery scenarios).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Only errors on standard error.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write its traces and summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Record wall time per iteration in the trace.
        #[arg(long)]
        timing: bool,
    },
    /// Compare distributed and centralized solutions on random instances.
    OracleSuite {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
        /// Per-coordinate gap threshold.
        #[arg(long, default_value_t = 1e-4)]
        coord_tol: f64,
        /// Relative objective gap threshold.
        #[arg(long, default_value_t = 1e-6)]
        objective_tol: f64,
    },
    /// Parse and check a scenario file without running it.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn flags(c: &Common, timing: bool) -> RunFlags {
    RunFlags {
        out: c.out.clone(),
        literal_dual_step: c.literal_dual_step,
        max_iters: c.max_iters,
        quiet: c.quiet,
        timing,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, common, timing } => match run_scenario(&config, &flags(&common, timing)) {
            Ok(outcome) => outcome.exit_code(),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
        Command::Validate { config, common } => match validate(&config, &flags(&common, false)) {
            Ok(sc) => {
                if !common.quiet {
                    let kind = match sc {
                        Scenario::EdgeAgreement(_) => "edge-agreement",
                        Scenario::Battery(_) => "battery-mpc",
                    };
                    println!("{}: valid {kind} scenario", config.display());
                }
                EXIT_CONVERGED
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
        Command::OracleSuite { count, seed, common, coord_tol, objective_tol } => {
            oracle_suite(count, seed, &common, coord_tol, objective_tol)
        }
    };
    ExitCode::from(code as u8)
}

fn oracle_suite(count: usize, seed: u64, common: &Common, coord_tol: f64, objective_tol: f64) -> i32 {
    let mut opts = SuiteOptions {
        count,
        seed,
        thresholds: GapThresholds { coordinate: coord_tol, objective: objective_tol, ..GapThresholds::default() },
        ..SuiteOptions::default()
    };
    if let Some(m) = common.max_iters {
        opts.max_iters = m;
    }
    if common.literal_dual_step {
        opts.dual_step = DualStepMode::Literal;
    }
    let report = match run_oracle_suite(&opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let written = fs::create_dir_all(&common.out)
        .map_err(|e| e.to_string())
        .and_then(|_| fs::File::create(common.out.join("oracle_suite.csv")).map_err(|e| e.to_string()))
        .and_then(|f| report.write_csv(f).map_err(|e| e.to_string()));
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return EXIT_CONFIG;
    }
    if !common.quiet {
        for r in report.rows.iter().filter(|r| !r.passed) {
            eprintln!(
                "instance {}: coordinate gap {:.3e}, objective gap {:.3e}, converged {} {}",
                r.instance, r.coordinate_gap, r.objective_gap, r.converged, r.error
            );
        }
        println!("{} of {} instances within thresholds", count - report.failures(), count);
    }
    if report.passed() {
        EXIT_CONVERGED
    } else {
        EXIT_NOT_CONVERGED
    }
}

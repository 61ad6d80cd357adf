use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lqsync::admm::RunStatus;
use lqsync::cli::{
    cmd_run, cmd_table1, cmd_validate, RunArgs, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VALIDATION,
};
use lqsync::zstep::ZStepMode;

#[derive(Parser)]
#[command(
    name = "lqsync",
    version,
    about = "Distributed LQ synchronization via ADMM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Flow,
    Direct,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a JSON scenario file
    Run {
        scenario: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Compare against the centralised optimum
        #[arg(long)]
        oracle: bool,
        /// Run even if the convergence condition fails
        #[arg(long = "override")]
        allow_override: bool,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Primal residual tolerance
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum)]
        zstep_mode: Option<Mode>,
    },
    /// Check the convergence condition; exit 2 if it fails
    Validate { scenario: String },
    /// Run the five homogeneous experiments and write table1.csv
    Table1 {
        #[arg(short, long, default_value = "results")]
        output: PathBuf,
    },
}

fn threads() -> usize {
    std::env::var("LQSYNC_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t: &usize| t > 0)
        .unwrap_or(1)
}

fn execute(cli: Cli) -> lqsync::Result<i32> {
    match cli.command {
        Command::Run {
            scenario,
            output,
            oracle,
            allow_override,
            max_iters,
            tol,
            zstep_mode,
        } => {
            let args = RunArgs {
                output,
                oracle,
                allow_override,
                max_iters,
                tol,
                zstep_mode: zstep_mode.map(|m| match m {
                    Mode::Flow => ZStepMode::DistributedFlow,
                    Mode::Direct => ZStepMode::DirectKkt,
                }),
                threads: threads(),
            };
            let report = cmd_run(&scenario, &args)?;
            println!("scenario:       {}", report.label);
            println!("status:         {}", report.status.as_str());
            println!("iterations:     {}", report.iterations);
            println!("cost J:         {:.6}", report.cost_j);
            println!("relative cost:  {:.6}", report.relative_cost);
            if let Some(gap) = report.oracle_gap {
                println!("oracle gap:     {gap:.3e}");
            }
            if let Some(note) = &report.oracle_note {
                println!("{note}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(report.exit_code())
        }
        Command::Validate { scenario } => {
            let report = cmd_validate(&scenario)?;
            print!("{report}");
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            })
        }
        Command::Table1 { output } => {
            let (rows, path) = cmd_table1(&output, threads())?;
            println!(
                "{:<28} {:>10} {:>14} {:>12} {:>9}  {:<22} {}",
                "scenario", "iterations", "relative cost", "reference", "dev", "sync state", "SSF"
            );
            for r in &rows {
                println!(
                    "{:<28} {:>10} {:>14.2} {:>12.2} {:>8.2}%  [{:>7.3}, {:>7.3}]     {}",
                    r.scenario,
                    r.iterations,
                    r.relative_cost,
                    r.reference_relative_cost,
                    100.0 * r.deviation,
                    r.sync_state[0],
                    r.sync_state[1],
                    r.ssf
                );
            }
            println!("wrote {}", path.display());
            let all = rows.iter().all(|r| r.status == RunStatus::Converged);
            Ok(if all { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use memladder::cli;
use memladder::config::ReportKind;
use memladder::report::ReportOptions;

#[derive(Parser)]
#[command(name = "memladder", version, about = "Memorisation scores across a ladder of model sizes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every run of an experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "MEMLADDER_OUT")]
        out: PathBuf,
        #[arg(long, env = "MEMLADDER_WORKERS", default_value_t = default_workers())]
        workers: usize,
        /// Continue an interrupted experiment in `out`.
        #[arg(long)]
        resume: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Recompute reports from the artifacts in `out`.
    Report {
        #[arg(long, env = "MEMLADDER_OUT")]
        out: PathBuf,
        #[arg(long = "kind", required = true, value_parser = ReportKind::parse)]
        kinds: Vec<ReportKind>,
        /// Trajectory deadband; repeat for several.
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
        /// Distillation delta threshold.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Exact leave-one-out scores by retraining.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "MEMLADDER_OUT")]
        out: PathBuf,
        #[arg(long, env = "MEMLADDER_WORKERS", default_value_t = default_workers())]
        workers: usize,
        #[arg(long)]
        resume: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a config and print the size of its plan.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Cmd::Run { config, out, workers, resume, quiet } => cli::cmd_run(&config, &out, workers, resume, !quiet).map(|o| {
            print_files(&o.reports);
            if o.failed_runs.is_empty() {
                0
            } else {
                eprintln!("failed runs: {}", o.failed_runs.join(", "));
                1
            }
        }),
        Cmd::Report { out, kinds, alphas, tau } => {
            cli::cmd_report(&out, &kinds, &ReportOptions { alphas, tau }).map(|files| {
                print_files(&files);
                0
            })
        }
        Cmd::Oracle { config, out, workers, resume, quiet } => {
            cli::cmd_oracle(&config, &out, workers, resume, !quiet).map(|files| {
                print_files(&files);
                0
            })
        }
        Cmd::Validate { config } => cli::cmd_validate(&config).map(|line| {
            println!("{line}");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

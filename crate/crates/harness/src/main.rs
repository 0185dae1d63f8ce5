use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rr_lab::aggregate::{aggregate_dir, ModeSummary};
use rr_lab::config::SeedSpec;
use rr_lab::suites::{run_suite, SuiteOptions};
use rr_lab::sweep::run_sweep;
use rr_lab::{HarnessError, SweepConfig};

#[derive(Parser)]
#[command(
    name = "rrlab",
    version,
    about = "Seeded sweeps and property suites for reward-robust tabular learners"
)]
struct Cli {
    /// Number of seeds (overrides the config, or a suite's default count).
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for suites.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (mode, seed) pair of a sweep config and aggregate the results.
    Run { config: PathBuf },
    /// Re-aggregate the run files of an existing sweep directory.
    Aggregate {
        dir: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        percentile_low: f64,
        #[arg(long, default_value_t = 90.0)]
        percentile_high: f64,
    },
    /// Run a named property suite ("all" runs every suite).
    Suite { name: String },
}

fn print_summary(rows: &[ModeSummary]) {
    let o = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{:<22} {:>5} {:>6} {:>9} {:>11}",
        "mode", "runs", "failed", "success", "last30"
    );
    for r in rows {
        println!(
            "{:<22} {:>5} {:>6} {:>9} {:>11}",
            r.mode,
            r.runs,
            r.failed,
            o(r.success_rate),
            o(r.last30_mean)
        );
    }
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = SweepConfig::from_path(&config)?;
            if let Some(n) = cli.seeds {
                cfg.seeds = SeedSpec::Count(n.max(1));
            }
            let workers = cli.workers.unwrap_or(cfg.workers);
            let out = cli
                .out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let report = run_sweep(&cfg, &out, workers)?;
            println!("sweep {} -> {}", cfg.name, report.out_dir.display());
            print_summary(&report.aggregate.summaries);
            if report.failed > 0 {
                eprintln!(
                    "{} runs failed; see the .failed files under {}",
                    report.failed,
                    out.join("runs").display()
                );
            }
            Ok(true)
        }
        Command::Aggregate {
            dir,
            percentile_low,
            percentile_high,
        } => {
            let title = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let agg = aggregate_dir(&dir, percentile_low, percentile_high, &title)?;
            print_summary(&agg.summaries);
            Ok(true)
        }
        Command::Suite { name } => {
            let mut opts = SuiteOptions {
                seeds: cli.seeds,
                out: cli.out,
                ..SuiteOptions::default()
            };
            if let Some(w) = cli.workers {
                opts.workers = w;
            }
            if let Some(s) = cli.master_seed {
                opts.master_seed = s;
            }
            let reports = run_suite(&name, &opts)?;
            for r in &reports {
                println!("{r}");
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

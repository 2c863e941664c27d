//! `ope-abstract`: benchmark runner for abstraction-based off-policy
//! evaluation experiments.
//!
//! Exit codes: 0 on success, 1 when a theorem property fails, 2 on config
//! errors.

use clap::{Parser, Subcommand};
use ope_abstract_cli::config::ExperimentConfig;
use ope_abstract_cli::plots::emit_plots_for_dir;
use ope_abstract_cli::runner::{run_experiment, run_theorem_suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ope-abstract", version, about = "OPE with state abstraction: benchmark experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for trial parallelism (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the theorem property battery over random MDP families.
    VerifyTheorems {
        /// Number of random instances.
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long, default_value_t = 20240001)]
        seed: u64,
        /// Output directory for the pass/fail report.
        #[arg(long, default_value = "out/theorems")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-render SVG figures from a finished run's CSV data.
    Plot {
        /// Directory containing summary.csv and run_meta.json.
        #[arg(long)]
        report: PathBuf,
    },
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Ignore the error if a pool already exists (e.g. repeated calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, jobs } => {
            set_jobs(jobs);
            let mut experiment = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            let out_dir = out
                .or_else(|| experiment.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(experiment.kind.name()));
            match run_experiment(&experiment, &out_dir) {
                Ok(report) => {
                    println!(
                        "{}: wrote {} (+{} figures) in {:.1}s",
                        report.kind,
                        report.summary_csv.display(),
                        report.svg_files.len(),
                        report.wall_clock_secs
                    );
                    if report.n_redrawn_datasets > 0 {
                        println!(
                            "note: {} dataset(s) redrawn to satisfy coverage",
                            report.n_redrawn_datasets
                        );
                    }
                    if report.all_properties_hold {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("property failure: see {}", report.summary_csv.display());
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::VerifyTheorems { instances, seed, out, jobs } => {
            set_jobs(jobs);
            if instances < 1 {
                eprintln!("config error: --instances must be at least 1");
                return ExitCode::from(2);
            }
            match run_theorem_suite(seed, instances, &out) {
                Ok(report) => {
                    let verdict = if report.all_properties_hold { "PASS" } else { "FAIL" };
                    println!("theorem suite over {instances} instances: {verdict}");
                    println!("report: {}", report.summary_csv.display());
                    if report.all_properties_hold {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Plot { report } => match emit_plots_for_dir(&report) {
            Ok(files) => {
                for f in &files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("plot failed: {e}");
                ExitCode::from(2)
            }
        },
    }
}

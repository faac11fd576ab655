use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbitbench::eval::EvalConfig;
use orbitbench::pipeline::{self, RunConfig};
use orbitbench::Error;

/// Synthetic aerial-imagery lab: render orbit sweeps, annotate, and evaluate detectors.
#[derive(Debug, Parser)]
#[command(name = "orbitbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render every frame of the configured sweep and write the trial directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Trial directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Render workers, 0 for all cores; overrides `workers` from the config.
        #[arg(long, env = "ORBITBENCH_WORKERS")]
        workers: Option<usize>,
    },
    /// Write ground-truth boxes with at least `--min-pixels` mask pixels as predictions.
    Oracle {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        min_pixels: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against a trial's annotations.
    Evaluate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Run config whose `eval` section is used; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render CSV and SVG reports from an evaluation results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Encode { .. } => 3,
        Error::UnknownFrames(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> orbitbench::Result<()> {
    match cli.command {
        Command::Generate { config, out, workers } => {
            let config = RunConfig::load(&config)?;
            let summary = pipeline::generate(&config, out.as_deref(), workers)?;
            println!(
                "generated {} frames, {} annotation records in {}",
                summary.frame_count,
                summary.record_count,
                summary.trial_dir.display()
            );
        }
        Command::Oracle {
            annotations,
            min_pixels,
            out,
        } => {
            let n = pipeline::oracle_file(&annotations, min_pixels, &out)?;
            println!("wrote {n} predictions to {}", out.display());
        }
        Command::Evaluate {
            annotations,
            predictions,
            config,
            out,
        } => {
            let eval = match config {
                Some(path) => RunConfig::load(&path)?.eval,
                None => EvalConfig::default(),
            };
            let results = pipeline::evaluate_files(&annotations, &predictions, &eval, &out)?;
            for (scope, map) in &results.map_by_illumination {
                match map {
                    Some(v) => println!("mAP {scope}: {v:.4}"),
                    None => println!("mAP {scope}: no data"),
                }
            }
        }
        Command::Report { results, out } => {
            let bundle = pipeline::report_file(&results, &out)?;
            println!("wrote {} report files to {}", bundle.files.len() + 1, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

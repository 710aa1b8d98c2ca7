use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaoslab_harness::acceptance::run_suite;
use chaoslab_harness::config::ExperimentConfig;
use chaoslab_harness::experiments::{execute_run, HarnessError};
use chaoslab_harness::manifest::RunManifest;

const THREADS_ENV: &str = "CHAOSLAB_THREADS";

#[derive(Parser)]
#[command(name = "chaoslab", version, about = "Interacting-particle limit laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config end-to-end and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's output_dir, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker count (also settable via CHAOSLAB_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance suite ("fast" skips the large-N sweeps).
    Verify {
        #[arg(default_value = "full")]
        suite: String,
    },
    /// Re-emit an output file listed in a run manifest.
    Report {
        manifest: PathBuf,
        #[arg(long)]
        format: String,
    },
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, out, seed, threads } => cmd_run(config, out, seed, threads),
        Cmd::Verify { suite } => cmd_verify(&suite),
        Cmd::Report { manifest, format } => cmd_report(&manifest, &format),
    }
}

fn cmd_run(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = out
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = threads.or_else(threads_from_env);
    match execute_run(&cfg, &out_dir, threads) {
        Ok(m) => {
            println!(
                "{}: wrote {} file(s) to {} in {:.2}s",
                m.experiment,
                m.outputs.len(),
                out_dir.display(),
                m.wall_time_secs
            );
            ExitCode::SUCCESS
        }
        Err(HarnessError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify(suite: &str) -> ExitCode {
    let fast = match suite {
        "fast" => true,
        "full" => false,
        other => {
            eprintln!("error: unknown suite `{other}` (expected `fast` or `full`)");
            return ExitCode::from(2);
        }
    };
    let results = run_suite(fast);
    let mut failed = 0usize;
    for r in &results {
        println!("{}", r.line());
        if !r.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria FAILED");
        ExitCode::from(1)
    }
}

fn cmd_report(manifest_path: &std::path::Path, format: &str) -> ExitCode {
    let ext = match format {
        "csv" => ".csv",
        "json" => ".json",
        "svg" => ".svg",
        other => {
            eprintln!("error: unknown format `{other}` (expected csv, json, or svg)");
            return ExitCode::from(2);
        }
    };
    let manifest = match RunManifest::from_path(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: cannot read manifest: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = manifest_path.parent().unwrap_or_else(|| std::path::Path::new("."));
    // report.json is the slope report; the manifest itself is not an output
    let target = manifest.outputs.iter().find(|o| o.ends_with(ext));
    match target {
        Some(rel) => match std::fs::read_to_string(dir.join(rel)) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: cannot read {rel}: {e}");
                ExitCode::from(1)
            }
        },
        None => {
            eprintln!(
                "error: manifest for `{}` lists no {} output",
                manifest.experiment, format
            );
            ExitCode::from(2)
        }
    }
}

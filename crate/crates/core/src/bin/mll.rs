//! `mll` — run sampling and verification experiments from JSON configs.
//!
//! Exit codes: 0 all checks passed, 1 configuration or execution error,
//! 2 the experiment ran but a tolerance check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mll_core::config::ExperimentConfig;
use mll_core::experiments::run_experiment;
use mll_core::recipes;

#[derive(Parser)]
#[command(name = "mll", version, about = "Mirror Langevin sampling and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file or a bundled recipe name.
    Run {
        /// Path to a config file, or the name of a bundled recipe.
        config: String,
        /// Output directory for report.json and the CSV series
        /// (default: the config's out_dir, falling back to ./mll_out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores; MLL_THREADS as fallback).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the bundled recipes.
    Recipes,
    /// Print the JSON config schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, threads } => run(config, out, seed, threads),
        Command::Recipes => {
            for r in recipes::RECIPES {
                println!("{:24} {}", r.name, r.description);
            }
            ExitCode::SUCCESS
        }
        Command::Schema => {
            println!("{}", mll_core::config::SCHEMA_DOC);
            ExitCode::SUCCESS
        }
    }
}

fn run(config: String, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> ExitCode {
    let thread_count = threads.or_else(|| {
        std::env::var("MLL_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = thread_count {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("mll: could not configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let (text, default_name) = match load_config_text(&config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("mll: {e}");
            return ExitCode::from(1);
        }
    };
    let mut cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mll: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = out
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mll_out").join(&default_name));

    match run_experiment(&cfg) {
        Ok(report) => {
            let path = match report.write(&out_dir) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("mll: could not write report: {e}");
                    return ExitCode::from(1);
                }
            };
            let checks = report.metrics.iter().filter(|m| m.pass.is_some()).count();
            let failed: Vec<&str> = report
                .metrics
                .iter()
                .filter(|m| m.pass == Some(false))
                .map(|m| m.name.as_str())
                .collect();
            eprintln!(
                "mll: {} finished in {:.1}s ({} checks, {} failed); report at {}",
                report.experiment,
                report.wall_clock_seconds,
                checks,
                failed.len(),
                path.display()
            );
            if report.violations.violations > 0 {
                eprintln!(
                    "mll: {} domain violations ({} aborted chains)",
                    report.violations.violations, report.violations.aborted_chains
                );
            }
            if report.violations.step_cap_exceeded {
                eprintln!("mll: advisory: step size exceeds the configured cap");
            }
            if report.passed {
                println!("PASS {}", report.experiment);
                ExitCode::SUCCESS
            } else {
                println!("FAIL {} [{}]", report.experiment, failed.join(", "));
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("mll: {e}");
            ExitCode::from(1)
        }
    }
}

/// Resolve a path or bundled recipe name to config text.
fn load_config_text(arg: &str) -> Result<(String, String), String> {
    let path = PathBuf::from(arg);
    if path.exists() {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".to_string());
        return std::fs::read_to_string(&path)
            .map(|t| (t, name))
            .map_err(|e| format!("cannot read {}: {e}", path.display()));
    }
    if let Some(recipe) = recipes::get_recipe(arg) {
        return Ok((recipe.json.to_string(), recipe.name.to_string()));
    }
    Err(format!(
        "'{arg}' is neither a config file nor a bundled recipe (see `mll recipes`)"
    ))
}

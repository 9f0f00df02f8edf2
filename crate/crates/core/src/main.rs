use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use feddro::harness::{report, run_experiment, sweep, RunConfig, SweepAxis};
use feddro::oracles::{verify_suite, SuiteOptions};
use feddro::{Error, Result};

/// Federated compositional optimization simulator.
#[derive(Debug, Parser)]
#[command(name = "feddro", version, about)]
struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and meta.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of experiments along one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Sweep root directory; defaults to the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle verification suite and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only the deterministic counterexample checks.
        #[arg(long)]
        counterexample_only: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate summary.csv for an existing sweep directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .parse_env("RUST_LOG")
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir in the config".into()))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir(out, &cfg)?;
            let outcome = run_experiment(&cfg, Some(&dir))?;
            let m = &outcome.meta;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} on {}: T={} I={} eta={:.6e} final |grad|^2={:.6e} phi={:.6e} a(T)={} -> {}",
                cfg.algorithm,
                m.problem.name,
                m.hyper.horizon,
                m.hyper.local_period,
                m.hyper.eta,
                m.final_grad_norm_sq,
                m.final_phi,
                m.sampled_index,
                dir.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(out, &cfg)?;
            let summary = sweep(&cfg, axis, &values, &seeds, &dir)?;
            print_summary(&dir, &summary);
            Ok(())
        }
        Command::Verify {
            seed,
            counterexample_only,
            out,
        } => {
            let report = verify_suite(&SuiteOptions {
                seed,
                counterexample_only,
                ..SuiteOptions::default()
            })?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(path) = out {
                std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))?;
            }
            let failed: Vec<String> = report
                .failures()
                .map(|c| format!("{} ({})", c.name, c.problem))
                .collect();
            if failed.is_empty() {
                info!("all {} checks passed", report.checks.len());
                Ok(())
            } else {
                Err(Error::Verification(failed.join(", ")))
            }
        }
        Command::Report { dir } => {
            let summary = report(&dir)?;
            print_summary(&dir, &summary);
            Ok(())
        }
    }
}

fn print_summary(dir: &Path, s: &feddro::harness::SweepSummary) {
    for v in &s.by_value {
        println!(
            "{}={}: runs={} final |grad|^2 = {:.4e} ± {:.2e}, avg |grad|^2 = {:.4e} ± {:.2e}",
            s.manifest.axis,
            v.value,
            v.runs,
            v.final_grad_norm_sq_mean,
            v.final_grad_norm_sq_std,
            v.avg_grad_norm_sq_mean,
            v.avg_grad_norm_sq_std
        );
    }
    println!(
        "summary written to {}",
        dir.join(feddro::harness::sweep::SUMMARY_FILE).display()
    );
}

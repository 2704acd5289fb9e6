//! `qla` — experiment runner for the quasi-likelihood analysis toolkit.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::ExecDefaults;
use runner::RunOptions;

#[derive(Parser)]
#[command(
    name = "qla",
    about = "Monte Carlo verification harness for quasi-likelihood estimators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every probe in the config and write tables, reports and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the global replicate count.
        #[arg(long)]
        reps: Option<u64>,
        /// Worker threads ("auto" or a positive integer).
        #[arg(long)]
        threads: Option<String>,
        /// Output directory (default: config out_dir, then $QLA_OUT_DIR, then ./qla-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Escalate quadrature self-check warnings to errors.
        #[arg(long)]
        strict: bool,
        /// Also dump one simulated path per scheduled scale.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Print the verdict matrix of a completed run directory.
    Report { dir: PathBuf },
    /// Single-sample QMLE/QBE on one simulated field.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        dump_paths: bool,
    },
    /// Run a single probe by name with the settings from the config.
    Probe {
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        threads: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
}

fn parse_threads(s: Option<String>, exec: &ExecDefaults) -> Result<Option<usize>> {
    match s.as_deref() {
        None => Ok(exec.threads),
        Some("auto") => Ok(None),
        Some(n) => {
            let v: usize = n.parse().map_err(|_| {
                anyhow::anyhow!("--threads must be a positive integer or \"auto\", got '{n}'")
            })?;
            if v == 0 {
                anyhow::bail!("--threads must be at least 1");
            }
            Ok(Some(v))
        }
    }
}

fn out_dir(flag: Option<PathBuf>, exec: &ExecDefaults) -> PathBuf {
    flag.or_else(|| exec.out_dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var("QLA_OUT_DIR").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qla-out"))
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            reps,
            threads,
            out,
            strict,
            dump_paths,
        } => {
            let (mut cfg, exec) = config::parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                apply_reps_override(&mut cfg, r)?;
            }
            let opts = RunOptions {
                threads: parse_threads(threads, &exec)?,
                out_dir: out_dir(out, &exec),
                strict,
                dump_paths,
            };
            runner::run(&cfg, &opts)
        }
        Command::Report { dir } => runner::report(&dir),
        Command::Estimate {
            config,
            seed,
            out,
            strict,
            dump_paths,
        } => {
            let (mut cfg, exec) = config::parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let opts = RunOptions {
                threads: None,
                out_dir: out_dir(out, &exec),
                strict,
                dump_paths,
            };
            runner::run_estimate(&cfg, &opts)
        }
        Command::Probe {
            name,
            config,
            seed,
            reps,
            threads,
            out,
            strict,
        } => {
            let (mut cfg, exec) = config::parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                apply_reps_override(&mut cfg, r)?;
            }
            // Keep only the named probe; fall back to its defaults when the
            // config does not list it.
            let entry = cfg
                .probes
                .iter()
                .find(|p| p.name == name)
                .cloned()
                .unwrap_or(config::ResolvedProbe {
                    name: name.clone(),
                    reps: cfg.reps,
                    r_grid: vec![2.0, 3.0, 4.0, 5.0, 6.0],
                    grid_size: 10_000,
                    k: 2.0,
                    q: 2.0,
                    delta: 0.5,
                    nodes_per_dim: 201,
                });
            if !config::KNOWN_PROBES.contains(&name.as_str()) {
                anyhow::bail!(
                    "unknown probe '{name}'; known probes: {}",
                    config::KNOWN_PROBES.join(", ")
                );
            }
            cfg.probes = vec![entry];
            let opts = RunOptions {
                threads: parse_threads(threads, &exec)?,
                out_dir: out_dir(out, &exec),
                strict,
                dump_paths: false,
            };
            runner::run(&cfg, &opts)
        }
    }
}

fn apply_reps_override(cfg: &mut config::ResolvedConfig, reps: u64) -> Result<()> {
    if reps < 100 {
        anyhow::bail!("reps must be >= 100, got {reps}");
    }
    for p in &mut cfg.probes {
        if p.reps == cfg.reps {
            p.reps = reps;
        }
    }
    cfg.reps = reps;
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbcopula_cli::commands::{cmd_compare, cmd_diagnose, cmd_fit, cmd_simulate};
use rbcopula_cli::config::{RunConfig, StudyConfig};
use rbcopula_cli::CliError;

#[derive(Parser)]
#[command(name = "rbcopula", version, about = "Bayesian copula regression for paired proportions")]
struct Cli {
    /// Worker threads for chains, replicates and envelopes.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write draws.csv, summary.json, psrf.txt and fit.json.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Do not fail when some PSRF exceeds 1.05.
        #[arg(long)]
        no_psrf_gate: bool,
        /// Responses are percentages.
        #[arg(long)]
        percent_scale: bool,
    },
    /// Log marginal likelihoods and residual tests for fitted models.
    Compare {
        #[arg(required = true)]
        fits: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Residual tests and dependence curves with envelopes for one fit.
    Diagnose {
        fit: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a simulation study.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rbcopula::exec::configure_threads(n)?;
    }
    match cli.command {
        Command::Fit { config, seed, output_dir, no_psrf_gate, percent_scale } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.data.percent_scale |= percent_scale;
            let out = output_dir.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let summary = cmd_fit(&cfg, &out, !no_psrf_gate)?;
            println!("{}: {} draws written to {}", summary.model, summary.chains.n_chains * summary.chains.retained_per_chain(), out.display());
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Compare { fits, seed, output_dir } => {
            let out = output_dir.unwrap_or_else(|| PathBuf::from("."));
            for r in cmd_compare(&fits, seed, &out)? {
                println!("{:<18} LML {:>12.3}", r.model, r.lml);
            }
        }
        Command::Diagnose { fit, seed, output_dir } => {
            let out = output_dir.unwrap_or_else(|| fit.clone());
            let rep = cmd_diagnose(&fit, seed, &out)?;
            for (j, t) in rep.tests.iter().enumerate() {
                println!(
                    "margin {}: uniformity p={:.4} dispersion p={:.4} outlier p={:.4}",
                    j + 1,
                    t.uniformity,
                    t.dispersion,
                    t.outlier
                );
            }
        }
        Command::Simulate { config, seed, output_dir } => {
            let mut cfg = StudyConfig::load(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let out = output_dir.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let summaries = cmd_simulate(&cfg, &out)?;
            for s in &summaries {
                println!("phi=({}, {}) tau={} n={}: {} ok, {} failed", s.phi1, s.phi2, s.tau, s.n, s.n_ok, s.n_failed);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

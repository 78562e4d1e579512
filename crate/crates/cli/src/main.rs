use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geoinv::experiment::{self, ExperimentConfig};
use geoinv::Error;

#[derive(Parser)]
#[command(name = "geoinv", version, about = "Bayesian geometric inversion for steady Darcy flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the true parameters and the fine-grid permeability.
    Truth(Common),
    /// Simulate noisy observations from the stored truth.
    Observe(Common),
    /// Run the Metropolis-within-Gibbs chains.
    Sample(Common),
    /// Compute MPSRF, IACT and acceptance statistics.
    Diagnose(Common),
    /// Pool chains into the parameter table and histograms.
    Summarize(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> geoinv::Result<ExperimentConfig> {
        ExperimentConfig::read(&self.config)?.with_overrides(self.seed, self.chains, self.sweeps, self.out.clone())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Missing(_) => 3,
        Error::Schema(_) | Error::Json(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> geoinv::Result<()> {
    match cli.command {
        Command::Truth(c) => {
            let cfg = c.load()?;
            let t = experiment::cmd_truth(&cfg)?;
            println!("truth written to {} (seed {})", cfg.out.display(), t.seed);
        }
        Command::Observe(c) => {
            let cfg = c.load()?;
            let d = experiment::cmd_observe(&cfg)?;
            println!("{} observations written to {}", d.data.values.len(), cfg.out.join(experiment::DATA_FILE).display());
        }
        Command::Sample(c) => {
            let cfg = c.load()?;
            let hs = experiment::cmd_sample(&cfg)?;
            for h in &hs {
                let rates: Vec<String> = h.groups.iter().map(|g| format!("{:.3}", g.acceptance_rate())).collect();
                println!("chain {}: {} samples, acceptance [{}]", h.chain, h.samples.len(), rates.join(", "));
            }
        }
        Command::Diagnose(c) => {
            let cfg = c.load()?;
            let d = experiment::cmd_diagnose(&cfg)?;
            match d.mpsrf {
                Some(r) => println!("MPSRF {r:.4} (threshold {}, converged: {})", d.mpsrf_threshold, d.converged),
                None => println!("MPSRF unavailable (too few samples or chains)"),
            }
        }
        Command::Summarize(c) => {
            let cfg = c.load()?;
            let s = experiment::cmd_summarize(&cfg)?;
            println!("{:<12} {:>12} {:>12} {:>12}", "parameter", "true", "mean", "variance");
            for p in &s.report.parameters {
                let t = s.truth.get(&p.name).map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                println!("{:<12} {:>12} {:>12.4} {:>12.3e}", p.name, t, p.mean, p.variance);
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
            ExitCode::from(exit_code(&e))
        }
    }
}

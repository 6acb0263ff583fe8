//! `mscrps`: simulate, fit and replicate CRPS estimation studies for
//! max-stable models from JSON configuration files.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxstable_crps::harness::{cmd_depsummary, cmd_experiment, cmd_fit, cmd_simulate, ExperimentSpec};
use maxstable_crps::{Error, ErrorKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Parser)]
#[command(name = "mscrps", version, about = "CRPS M-estimation for max-stable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw observations from the configured model and write data.csv.
    Simulate(Common),
    /// Fit the configured model to the config's data file and write fit.json.
    Fit(Common),
    /// Run a replication study and write summary.json and replicates.csv.
    Experiment(Common),
    /// Print the extremal coefficient and pairwise co-variations.
    Depsummary(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides the configured value).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides the configured value; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentSpec, PathBuf), Error> {
        let mut spec = ExperimentSpec::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            spec.jobs = jobs;
        }
        spec.validate()?;
        let out = self.out.clone().or_else(|| spec.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok((spec, out))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    // Report lines are best effort: a closed pipe must not turn success into a panic.
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Simulate(c) => {
            let (spec, out) = c.load()?;
            let data = cmd_simulate(&spec, &out)?;
            let _ = writeln!(stdout, "wrote {} × {} observations to {}", data.n(), data.d(), out.join("data.csv").display());
            Ok(0)
        }
        Command::Fit(c) => {
            let (spec, out) = c.load()?;
            let fit = cmd_fit(&spec, &out)?;
            let _ = writeln!(stdout, "theta_hat = {:?}, objective = {}, converged = {}", fit.theta_hat, fit.objective, fit.converged);
            if let Some(intervals) = &fit.intervals {
                for (name, iv) in fit.param_names.iter().zip(intervals) {
                    let _ = writeln!(stdout, "  {name}: [{}, {}]", iv.lower, iv.upper);
                }
            }
            Ok(if fit.converged { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::Experiment(c) => {
            let (spec, out) = c.load()?;
            let report = cmd_experiment(&spec, &out)?;
            for s in &report.results {
                let _ = write!(stdout, "n={} completed={} failures={}", s.n, s.completed, s.failures);
                if let Some(rate) = s.error_rate {
                    let _ = write!(stdout, " error_rate={rate:.4}");
                }
                let _ = writeln!(stdout);
                for p in &s.parameters {
                    let sd = p.sd.map_or("-".into(), |v| format!("{v:.4}"));
                    let cov = p.coverage.map_or("-".into(), |v| format!("{v:.3}"));
                    let _ = writeln!(stdout, "  {}: mean={:.4} sd={sd} coverage={cov}", p.name, p.mean);
                }
            }
            Ok(0)
        }
        Command::Depsummary(c) => {
            let (spec, out) = c.load()?;
            let summary = cmd_depsummary(&spec, Some(&out))?;
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mscrps: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

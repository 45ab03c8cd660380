//! `pursuit`: precompute caches, run policy sweeps and export plotting tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pursuit_cli::commands::{cmd_calibrate, cmd_mdp, cmd_plotdata, cmd_random_baseline, cmd_run};
use pursuit_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pursuit", version, about = "Olfactory pursuit of a run-and-tumble target")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Episodes per sweep point.
    #[arg(long, value_name = "N")]
    episodes: Option<usize>,
    /// Build missing transition matrices and Q-tables on the fly.
    #[arg(long)]
    auto_build: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fully observable pursuit problem for every persistence time.
    Mdp(Common),
    /// Estimate the lattice velocity chain of the continuous target.
    Calibrate(Common),
    /// Sweep the blending weight and write sweep.csv and best.csv.
    Run(Common),
    /// Export a long-format plotting table from a sweep.csv.
    Plotdata {
        /// Input sweep table.
        input: PathBuf,
        /// Output file.
        #[arg(long, value_name = "PATH", default_value = "plotdata.csv")]
        out: PathBuf,
    },
    /// Sweep the tumble probability of the random-walk baseline.
    RandomBaseline(Common),
}

fn load(c: &Common) -> Result<(ExperimentConfig, bool), CliError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(n) = c.episodes {
        cfg.episodes = n;
    }
    cfg.validate()?;
    let build = c.auto_build || cfg.auto_build;
    Ok((cfg, build))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mdp(c) => {
            let (cfg, build) = load(&c)?;
            for e in cmd_mdp(&cfg, build)? {
                println!("tau_p={} {:?} sweeps={} {}", e.tau_p, e.status, e.sweeps, e.path.display());
            }
        }
        Command::Calibrate(c) => {
            let (cfg, _) = load(&c)?;
            for cal in cmd_calibrate(&cfg)? {
                if let Some(w) = &cal.warning {
                    eprintln!("warning: {w}");
                }
                println!(
                    "{} implied_persistence={:.3} max_bootstrap_sigma={:.2e}",
                    cal.path.display(),
                    cal.implied_persistence,
                    cal.max_sigma
                );
            }
        }
        Command::Run(c) => {
            let (cfg, build) = load(&c)?;
            let out = cmd_run(&cfg, build)?;
            println!("{}", out.sweep.display());
            println!("{}", out.best.display());
        }
        Command::RandomBaseline(c) => {
            let (cfg, build) = load(&c)?;
            let out = cmd_random_baseline(&cfg, build)?;
            println!("{}", out.sweep.display());
            println!("{}", out.best.display());
        }
        Command::Plotdata { input, out } => {
            cmd_plotdata(&input, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

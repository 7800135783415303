use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_consensus_cli::commands;
use robust_consensus_cli::{CliError, ExperimentConfig};

const THREADS_VAR: &str = "ROBUST_CONSENSUS_THREADS";

#[derive(Parser)]
#[command(name = "robust-consensus", version, about = "Robust consensus control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional moments for every configured control.
    Test1(Common),
    /// Two-dimensional runs over several nu values, with certificates.
    Test2(Common),
    /// Mean-field densities from the particle ensemble.
    Test3(Common),
    /// Lower bound on gamma over a (nu, p_bar) grid.
    GammaSurface(Common),
    /// Robustness certificate for one gamma.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    configure_threads()?;
    let load = |c: &Common| -> Result<(ExperimentConfig, u64), CliError> {
        let cfg = ExperimentConfig::load(&c.config)?;
        let seed = c.seed.unwrap_or(cfg.seed);
        Ok((cfg, seed))
    };
    match &cli.command {
        Command::Test1(c) => {
            let (cfg, seed) = load(c)?;
            commands::cmd_test1(&cfg, &c.out, seed)
        }
        Command::Test2(c) => {
            let (cfg, seed) = load(c)?;
            Ok(commands::cmd_test2(&cfg, &c.out, seed)?.1)
        }
        Command::Test3(c) => {
            let (cfg, seed) = load(c)?;
            Ok(commands::cmd_test3(&cfg, &c.out, seed)?.1)
        }
        Command::GammaSurface(c) => {
            let (cfg, _) = load(c)?;
            commands::cmd_gamma_surface(&cfg, &c.out)
        }
        Command::Certify { common, gamma } => {
            let (cfg, _) = load(common)?;
            Ok(commands::cmd_certify(&cfg, &common.out, *gamma)?.1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

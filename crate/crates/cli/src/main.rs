use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fedsep_cli::{execute, exit_code, Command, ExperimentConfig};

/// Simulate federated learning under minimum-separation client participation.
#[derive(Debug, Parser)]
#[command(name = "fedsep", version)]
struct Args {
    /// pi-vs-r | toy-bias | synth-debias | mixing | estimator-rate | evolution
    command: String,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set hyper.rounds=5000`. Repeatable; applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Base seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = args
        .command
        .parse::<Command>()
        .and_then(|cmd| ExperimentConfig::load(&args.config, &args.overrides)?.resolve(cmd, args.seed))
        .and_then(|cfg| execute(&cfg, &args.overrides, &args.out));
    match result {
        Ok(out) => {
            log::info!("wrote {}", out.root().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

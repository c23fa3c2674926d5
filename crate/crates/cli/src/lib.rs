//! Experiment harness: config handling, dispatch and artifact writing for
//! the `fedsep` command.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;

use fedsep_core::{Error, Result};

pub use config::{Command, ExperimentConfig};
pub use output::OutputDir;

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Domain(_) => 2,
        Error::Feasibility(_) => 3,
        Error::Numerical { .. } => 4,
        Error::Io(_) => 1,
    }
}

/// Runs `config` (already resolved for its command) and writes all tables
/// and the manifest into `out_dir`.
pub fn execute(config: &ExperimentConfig, overrides: &[String], out_dir: &Path) -> Result<OutputDir> {
    use experiments::*;
    let command = config
        .experiment
        .ok_or_else(|| Error::Validation("config has not been resolved for a command".into()))?;
    let mut out = OutputDir::create(out_dir)?;
    match command {
        Command::PiVsR => pi_vs_r::write(&pi_vs_r::run(config)?, &mut out)?,
        Command::ToyBias => toy_bias::write(&toy_bias::run(config)?, &mut out)?,
        Command::SynthDebias => synth_debias::write(&synth_debias::run(config)?, &mut out)?,
        Command::Mixing => mixing::write(&mixing::run(config)?, &mut out)?,
        Command::EstimatorRate => estimator_rate::write(&estimator_rate::run(config)?, &mut out)?,
        Command::Evolution => evolution::write(&evolution::run(config)?, &mut out)?,
    }
    out.write_manifest(config, overrides)?;
    Ok(out)
}

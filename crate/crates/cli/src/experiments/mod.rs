//! One module per command. Each exposes `run`, which computes a report from
//! a resolved config, and `write`, which turns the report into CSV tables.

pub mod estimator_rate;
pub mod evolution;
pub mod mixing;
pub mod pi_vs_r;
pub mod synth_debias;
pub mod toy_bias;

use fedsep_core::{enumerate_exact_chain, AvailabilityProfile, ChainConfig, Error, ExactChain, ExactOptions, Result};

/// Seed of replicate `k` for a run seeded with `base`.
pub fn replicate_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

/// The exact chain, or `None` with the reason when it is too large.
pub(crate) fn try_exact(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    opts: &ExactOptions,
) -> Result<std::result::Result<ExactChain, String>> {
    match enumerate_exact_chain(profile, config, opts) {
        Ok(c) => Ok(Ok(c)),
        Err(Error::Feasibility(msg)) => Ok(Err(msg)),
        Err(e) => Err(e),
    }
}

/// `pi_R` from the exact chain when it fits under the cap, otherwise from
/// Monte Carlo (with a warning), otherwise a feasibility error.
pub(crate) fn reference_marginal(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    opts: &ExactOptions,
    mc: Option<&crate::config::McSection>,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>> {
    let r = config.min_separation();
    let reason = if config.state_count().is_some_and(|d| d <= opts.max_states) {
        match try_exact(profile, config, opts)? {
            Ok(chain) => return Ok(chain.marginal().to_vec()),
            Err(msg) => msg,
        }
    } else {
        format!(
            "d(M,R) = {} exceeds exact.max_states = {}",
            config
                .state_count()
                .map_or_else(|| "overflow".into(), |d| d.to_string()),
            opts.max_states
        )
    };
    let Some(mc) = mc else {
        return Err(Error::Feasibility(format!(
            "R={r}: {reason}; add an [mc] section to estimate pi_R"
        )));
    };
    warnings.push(format!("R={r}: {reason}; reference pi_R estimated by Monte Carlo"));
    Ok(fedsep_core::estimate_pi(profile, config, mc.horizon, mc.replicas, mc.burn_in, seed)?.pi_hat)
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

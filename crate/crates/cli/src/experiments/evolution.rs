//! Per-round sampling distribution from an empty history, and its distance to `pi_R`.

use fedsep_core::{marginal_evolution, Result};
use rayon::prelude::*;

use super::{reference_marginal, replicate_seed};
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSeries {
    pub r: usize,
    /// `tv[t] = || eta_R(t) - pi_R ||_TV`.
    pub tv: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub series: Vec<EvolutionSeries>,
    pub warnings: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let chain = cfg.chain.as_ref().expect("resolved");
    let profile = cfg.profile.as_ref().expect("resolved").build(chain.n_clients)?;
    let opts = cfg.exact.as_ref().expect("resolved").options();
    let evo = cfg.evolution.as_ref().expect("resolved");
    let seed = cfg.seed();

    let results: Vec<(EvolutionSeries, Vec<String>)> = chain
        .configs()?
        .into_par_iter()
        .map(|config| -> Result<_> {
            let r = config.min_separation();
            let mut warnings = Vec::new();
            // Reference and trajectories use different seeds so they are independent.
            let reference = reference_marginal(
                &profile,
                &config,
                &opts,
                cfg.mc.as_ref(),
                replicate_seed(seed, r).wrapping_add(1 << 32),
                &mut warnings,
            )?;
            let ev = marginal_evolution(&profile, &config, evo.horizon, evo.replicas, replicate_seed(seed, r))?;
            Ok((
                EvolutionSeries {
                    r,
                    tv: ev.tv_to(&reference),
                },
                warnings,
            ))
        })
        .collect::<Result<_>>()?;
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for (s, w) in results {
        series.push(s);
        warnings.extend(w);
    }
    Ok(Report { series, warnings })
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let mut w = out.csv("evolution.csv")?;
    w.write_record(["t", "R", "tv_to_pi"])?;
    for s in &report.series {
        for (t, v) in s.tv.iter().enumerate() {
            w.write_record([t.to_string(), s.r.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    for m in &report.warnings {
        out.warn(m.clone());
    }
    Ok(())
}

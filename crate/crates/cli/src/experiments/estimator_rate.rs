//! Mean squared sup-norm error of the running participation frequencies.

use fedsep_core::{mean_estimator_error, Result};
use rayon::prelude::*;

use super::{reference_marginal, replicate_seed};
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub r: usize,
    pub reference: Vec<f64>,
    /// `mean_error[t]`: mean over seeds of `||lambda_t - pi||_inf^2` after round `t`.
    pub mean_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub series: Vec<RateSeries>,
    pub checkpoints: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let chain = cfg.chain.as_ref().expect("resolved");
    let profile = cfg.profile.as_ref().expect("resolved").build(chain.n_clients)?;
    let opts = cfg.exact.as_ref().expect("resolved").options();
    let est = cfg.estimator.as_ref().expect("resolved");
    let seed = cfg.seed();

    let results: Vec<(RateSeries, Vec<String>)> = chain
        .configs()?
        .into_par_iter()
        .map(|config| -> Result<_> {
            let r = config.min_separation();
            let mut warnings = Vec::new();
            let reference = reference_marginal(
                &profile,
                &config,
                &opts,
                cfg.mc.as_ref(),
                replicate_seed(seed, r),
                &mut warnings,
            )?;
            let mean_error = mean_estimator_error(
                &profile,
                &config,
                est.horizon,
                est.seeds,
                replicate_seed(seed, r),
                &reference,
            )?;
            Ok((
                RateSeries {
                    r,
                    reference,
                    mean_error,
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
    Ok(Report {
        series,
        checkpoints: est.checkpoints.clone(),
        warnings,
    })
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let mut w = out.csv("estimator_rate.csv")?;
    w.write_record(["R", "t", "mean_sq_inf_error"])?;
    for s in &report.series {
        for (t, v) in s.mean_error.iter().enumerate() {
            w.write_record([s.r.to_string(), t.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = out.csv("estimator_checkpoints.csv")?;
    w.write_record(["R", "t", "mean_sq_inf_error", "ratio_to_first_checkpoint"])?;
    for s in &report.series {
        let Some(&first) = report.checkpoints.first() else {
            break;
        };
        for &t in &report.checkpoints {
            w.write_record([
                s.r.to_string(),
                t.to_string(),
                s.mean_error[t].to_string(),
                (s.mean_error[t] / s.mean_error[first]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    for m in &report.warnings {
        out.warn(m.clone());
    }
    Ok(())
}

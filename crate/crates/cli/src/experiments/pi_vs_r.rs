//! Distance of the marginal participation distribution from uniform as the
//! separation grows.

use fedsep_core::chain::distance_to_uniform;
use fedsep_core::{estimate_pi, AvailabilityProfile, Result};
use rayon::prelude::*;
use serde::Serialize;

use super::{replicate_seed, try_exact};
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiRow {
    pub r: usize,
    pub method: Method,
    pub l1_to_uniform: f64,
    /// Sum of per-client standard errors (0 for exact rows); bounds the
    /// standard error of both `pi` in L1 and `l1_to_uniform`.
    pub stderr: f64,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub profile: AvailabilityProfile,
    pub rows: Vec<PiRow>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn row(&self, r: usize, method: Method) -> Option<&PiRow> {
        self.rows.iter().find(|row| row.r == r && row.method == method)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let chain = cfg.chain.as_ref().expect("resolved");
    let profile = cfg.profile.as_ref().expect("resolved").build(chain.n_clients)?;
    let opts = cfg.exact.as_ref().expect("resolved").options();
    let mc = cfg.mc.as_ref().expect("resolved");
    let seed = cfg.seed();

    let per_r: Vec<(Vec<PiRow>, Option<String>)> = chain
        .configs()?
        .into_par_iter()
        .map(|config| -> Result<_> {
            let r = config.min_separation();
            let mut rows = Vec::new();
            let mut warning = None;
            let within_cap = config.state_count().is_some_and(|d| d <= opts.max_states);
            let exact = if within_cap {
                match try_exact(&profile, &config, &opts)? {
                    Ok(ch) => Some(ch),
                    Err(msg) => {
                        warning = Some(format!("R={r}: exact chain infeasible ({msg}); using Monte Carlo"));
                        None
                    }
                }
            } else {
                None
            };
            if let Some(ch) = &exact {
                rows.push(PiRow {
                    r,
                    method: Method::Exact,
                    l1_to_uniform: distance_to_uniform(ch.marginal()),
                    stderr: 0.0,
                    pi: ch.marginal().to_vec(),
                });
            }
            if exact.is_none() || mc.cross_check {
                let est = estimate_pi(
                    &profile,
                    &config,
                    mc.horizon,
                    mc.replicas,
                    mc.burn_in,
                    replicate_seed(seed, r),
                )?;
                rows.push(PiRow {
                    r,
                    method: Method::Mc,
                    l1_to_uniform: distance_to_uniform(&est.pi_hat),
                    stderr: if mc.replicas > 1 { est.total_stderr() } else { f64::NAN },
                    pi: est.pi_hat,
                });
            }
            Ok((rows, warning))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (r, w) in per_r {
        rows.extend(r);
        warnings.extend(w);
    }
    Ok(Report {
        profile,
        rows,
        warnings,
    })
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let mut w = out.csv("pi_vs_r.csv")?;
    w.write_record(["R", "l1_distance_to_uniform", "method", "stderr"])?;
    for row in &report.rows {
        w.write_record([
            row.r.to_string(),
            row.l1_to_uniform.to_string(),
            row.method.as_str().to_string(),
            row.stderr.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("pi_by_client.csv")?;
    w.write_record(["R", "method", "client_id", "pi", "p", "abs_dev_from_uniform"])?;
    let u = 1.0 / report.profile.len() as f64;
    for row in &report.rows {
        for (i, (&pi, &p)) in row.pi.iter().zip(report.profile.probs()).enumerate() {
            w.write_record([
                row.r.to_string(),
                row.method.as_str().to_string(),
                i.to_string(),
                pi.to_string(),
                p.to_string(),
                (pi - u).abs().to_string(),
            ])?;
        }
    }
    w.flush()?;
    for msg in &report.warnings {
        out.warn(msg.clone());
    }
    Ok(())
}

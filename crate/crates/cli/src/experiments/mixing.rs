//! Worst-case total-variation decay and mixing time of the exact chain per separation.

use fedsep_core::chain::mixing::{tau_mix, tv_decay};
use fedsep_core::{Error, Result};
use rayon::prelude::*;

use super::try_exact;
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingRow {
    pub r: usize,
    pub n_states: Option<usize>,
    pub period: Option<usize>,
    pub tau_mix: Option<usize>,
    pub tv: Vec<f64>,
    /// Why a value is missing, if one is.
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<MixingRow>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let chain = cfg.chain.as_ref().expect("resolved");
    let profile = cfg.profile.as_ref().expect("resolved").build(chain.n_clients)?;
    let opts = cfg.exact.as_ref().expect("resolved").options();
    let k_max = cfg.mixing.as_ref().expect("resolved").k_max;

    let rows = chain
        .configs()?
        .into_par_iter()
        .map(|config| -> Result<MixingRow> {
            let r = config.min_separation();
            let mut row = MixingRow {
                r,
                n_states: None,
                period: None,
                tau_mix: None,
                tv: Vec::new(),
                note: String::new(),
            };
            let within_cap = config.state_count().is_some_and(|d| d <= opts.max_states);
            let exact = if within_cap {
                try_exact(&profile, &config, &opts)?
            } else {
                Err("state count over exact.max_states".into())
            };
            let ch = match exact {
                Ok(ch) => ch,
                Err(msg) => {
                    row.note =
                        format!("exact chain infeasible: {msg}; see the evolution command for a Monte Carlo view");
                    return Ok(row);
                }
            };
            row.n_states = Some(ch.n_states());
            row.period = Some(ch.period());
            match tv_decay(&ch, k_max) {
                Ok(tv) => row.tv = tv,
                Err(Error::Feasibility(msg)) => row.note = msg,
                Err(e) => return Err(e),
            }
            match tau_mix(&ch) {
                Ok(t) => row.tau_mix = Some(t),
                Err(Error::Domain(msg) | Error::Feasibility(msg)) => {
                    if !row.note.is_empty() {
                        row.note.push_str("; ");
                    }
                    row.note.push_str(&msg);
                }
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(Report { rows })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let mut w = out.csv("mixing.csv")?;
    w.write_record(["R", "n_states", "period", "tau_mix", "note"])?;
    for r in &report.rows {
        w.write_record([
            r.r.to_string(),
            opt(r.n_states),
            opt(r.period),
            opt(r.tau_mix),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    let mut w = out.csv("tv_decay.csv")?;
    w.write_record(["R", "k", "tv"])?;
    for r in &report.rows {
        for (k, v) in r.tv.iter().enumerate() {
            w.write_record([r.r.to_string(), k.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    for r in report.rows.iter().filter(|r| r.n_states.is_none()) {
        out.warn(format!("R={}: {}", r.r, r.note));
    }
    Ok(())
}

//! CSV and JSON dumps of exact chains and marginals.

use std::io::Write;

use serde::Serialize;

use super::exact::ExactChain;
use crate::error::Result;

/// Writes `row_state,col_state,probability` for every nonzero of `P_R`.
pub fn write_transition_csv<W: Write>(chain: &ExactChain, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row_state", "col_state", "probability"])?;
    for (r, c, v) in chain.transition().triples() {
        w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    n_clients: usize,
    batch_size: usize,
    min_separation: usize,
    state_count: usize,
    period: usize,
    /// Windows as lists of batches, newest first, in state-index order.
    states: Vec<Vec<Vec<usize>>>,
    stationary: &'a [f64],
    marginal: &'a [f64],
}

/// Writes the JSON sidecar: state list, `zeta_R`, `pi_R`, `d(M,R)` and period.
pub fn write_chain_json<W: Write>(chain: &ExactChain, out: W) -> Result<()> {
    let cfg = chain.config();
    let states = (0..chain.n_states())
        .map(|i| {
            chain
                .state_batches(i)
                .into_iter()
                .map(|b| b.members().to_vec())
                .collect()
        })
        .collect();
    let sidecar = Sidecar {
        n_clients: cfg.n_clients(),
        batch_size: cfg.batch_size(),
        min_separation: cfg.min_separation(),
        state_count: chain.n_states(),
        period: chain.period(),
        states,
        stationary: chain.stationary(),
        marginal: chain.marginal(),
    };
    serde_json::to_writer_pretty(out, &sidecar)?;
    Ok(())
}

/// Writes `client_id,pi,p,abs_dev_from_uniform`.
pub fn write_pi_csv<W: Write>(pi: &[f64], p: &[f64], out: W) -> Result<()> {
    let u = 1.0 / pi.len() as f64;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["client_id", "pi", "p", "abs_dev_from_uniform"])?;
    for (i, (&x, &pi_p)) in pi.iter().zip(p).enumerate() {
        w.write_record([
            i.to_string(),
            x.to_string(),
            pi_p.to_string(),
            (x - u).abs().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

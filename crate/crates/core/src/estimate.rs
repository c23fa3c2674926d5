//! Monte Carlo estimates of participation marginals and the running frequency
//! estimator used by debiased training.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{ChainConfig, ChainState, OrderedBatch};
use crate::error::{Error, Result};
use crate::profile::AvailabilityProfile;
use crate::rng::{self, SimRng};

/// Burn-in used when no exact mixing time is known.
pub const DEFAULT_BURN_IN: usize = 1000;

/// `20 * tau_mix` when the mixing time is known, else [`DEFAULT_BURN_IN`].
pub fn default_burn_in(tau_mix: Option<usize>) -> usize {
    tau_mix.map_or(DEFAULT_BURN_IN, |t| 20 * t)
}

/// Per-client participation counters `t_i` and the frequencies
/// `lambda^i = t_i / ((t + 1) B)` after `t + 1` rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyEstimator {
    counts: Vec<u64>,
    rounds_seen: u64,
    batch_size: usize,
}

impl FrequencyEstimator {
    pub fn new(n_clients: usize, batch_size: usize) -> Self {
        Self {
            counts: vec![0; n_clients],
            rounds_seen: 0,
            batch_size,
        }
    }

    /// Records one completed round.
    pub fn observe(&mut self, batch: &OrderedBatch) {
        for &c in batch.members() {
            self.counts[c] += 1;
        }
        self.rounds_seen += 1;
    }

    pub fn count(&self, client: usize) -> u64 {
        self.counts[client]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rounds_seen(&self) -> u64 {
        self.rounds_seen
    }

    /// `lambda^i`; zero before the first round.
    pub fn lambda(&self, client: usize) -> f64 {
        if self.rounds_seen == 0 {
            return 0.0;
        }
        self.counts[client] as f64 / (self.rounds_seen as f64 * self.batch_size as f64)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.lambda(i)).collect()
    }

    /// `|| lambda - reference ||_inf^2`.
    pub fn sup_sq_error(&self, reference: &[f64]) -> f64 {
        let e = (0..self.counts.len())
            .map(|i| (self.lambda(i) - reference[i]).abs())
            .fold(0.0, f64::max);
        e * e
    }
}

/// Replica-averaged estimate of `pi_R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalEstimate {
    pub pi_hat: Vec<f64>,
    /// Across-replica standard error; NaN with a single replica.
    pub stderr: Vec<f64>,
    pub replicas: usize,
    pub horizon: usize,
    /// Rounds counted per replica after burn-in.
    pub counted_rounds: usize,
}

impl MarginalEstimate {
    pub fn total_stderr(&self) -> f64 {
        self.stderr.iter().sum()
    }
}

/// Estimates `pi_R` from `replicas` independent chains of `horizon` rounds.
///
/// Each replica counts participations over the last rounds after `burn_in`,
/// truncated to a whole number of `M`-round sweeps, and reports
/// `count_i / (B * counted)`. Replica `k` uses stream `k` of `seed`.
pub fn estimate_pi(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    horizon: usize,
    replicas: usize,
    burn_in: usize,
    seed: u64,
) -> Result<MarginalEstimate> {
    if horizon <= burn_in {
        return Err(Error::validation(format!(
            "horizon {horizon} must exceed burn-in {burn_in}"
        )));
    }
    if replicas == 0 {
        return Err(Error::validation("at least one replica is required"));
    }
    let m = config.n_batches();
    let counted = (horizon - burn_in) / m * m;
    if counted == 0 {
        return Err(Error::validation(format!(
            "horizon - burn_in = {} is shorter than one sweep of {m} rounds",
            horizon - burn_in
        )));
    }
    let skip = horizon - counted;
    let n = config.n_clients();
    let b = config.batch_size() as f64;

    let per_replica: Vec<Vec<f64>> = rng::streams(seed, replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut chain = ChainState::new(profile.clone(), *config, r)?;
            for _ in 0..skip {
                chain.next_batch()?;
            }
            let mut counts = vec![0u64; n];
            for _ in 0..counted {
                for &c in chain.next_batch()?.members() {
                    counts[c] += 1;
                }
            }
            Ok(counts.iter().map(|&c| c as f64 / (b * counted as f64)).collect())
        })
        .collect::<Result<_>>()?;

    let k = replicas as f64;
    let pi_hat: Vec<f64> = (0..n)
        .map(|i| per_replica.iter().map(|v| v[i]).sum::<f64>() / k)
        .collect();
    let stderr = (0..n)
        .map(|i| {
            if replicas < 2 {
                return f64::NAN;
            }
            let var = per_replica.iter().map(|v| (v[i] - pi_hat[i]).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    Ok(MarginalEstimate {
        pi_hat,
        stderr,
        replicas,
        horizon,
        counted_rounds: counted,
    })
}

/// Per-round sampling distributions estimated over independent replicas,
/// each started from an empty history.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEvolution {
    /// `eta[t][i]`: fraction of replicas whose round-`t` batch is led by client `i`.
    pub eta: Vec<Vec<f64>>,
    /// Fraction of replicas with client `i` anywhere in the round-`t` batch, divided by `B`.
    pub any_position: Vec<Vec<f64>>,
    pub replicas: usize,
}

impl MarginalEvolution {
    /// `|| eta(t) - reference ||_TV` for every round.
    pub fn tv_to(&self, reference: &[f64]) -> Vec<f64> {
        self.eta.iter().map(|e| total_variation(e, reference)).collect()
    }

    /// Average of `eta(t)` over the last `rounds` rounds, a proxy for `pi_R`
    /// when no exact value is available.
    pub fn tail_average(&self, rounds: usize) -> Vec<f64> {
        let rounds = rounds.clamp(1, self.eta.len());
        let n = self.eta[0].len();
        let tail = &self.eta[self.eta.len() - rounds..];
        (0..n)
            .map(|i| tail.iter().map(|e| e[i]).sum::<f64>() / rounds as f64)
            .collect()
    }
}

/// `(1/2) ||a - b||_1`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Estimates `eta_R(t)` for `t = 0..=horizon`.
pub fn marginal_evolution(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<MarginalEvolution> {
    if replicas == 0 {
        return Err(Error::validation("at least one replica is required"));
    }
    let n = config.n_clients();
    let rows = horizon + 1;
    let streams = rng::streams(seed, replicas);
    let chunk = replicas.div_ceil(rayon::current_num_threads().max(1) * 4).max(1);

    let (lead, any) = streams
        .par_chunks(chunk)
        .map(|rngs| -> Result<(Vec<u64>, Vec<u64>)> {
            let mut lead = vec![0u64; rows * n];
            let mut any = vec![0u64; rows * n];
            for r in rngs {
                let mut chain = ChainState::new(profile.clone(), *config, r.clone())?;
                for t in 0..rows {
                    let batch = chain.next_batch()?;
                    lead[t * n + batch.leader()] += 1;
                    for &c in batch.members() {
                        any[t * n + c] += 1;
                    }
                }
            }
            Ok((lead, any))
        })
        .try_reduce(
            || (vec![0u64; rows * n], vec![0u64; rows * n]),
            |(mut la, mut aa), (lb, ab)| {
                la.iter_mut().zip(lb).for_each(|(x, y)| *x += y);
                aa.iter_mut().zip(ab).for_each(|(x, y)| *x += y);
                Ok((la, aa))
            },
        )?;

    let k = replicas as f64;
    let b = config.batch_size() as f64;
    let eta = lead
        .chunks(n)
        .map(|r| r.iter().map(|&c| c as f64 / k).collect())
        .collect();
    let any_position = any
        .chunks(n)
        .map(|r| r.iter().map(|&c| c as f64 / (k * b)).collect())
        .collect();
    Ok(MarginalEvolution {
        eta,
        any_position,
        replicas,
    })
}

/// `|| lambda_t - reference ||_inf^2` for rounds `t = 0..horizon` of one chain.
pub fn estimator_error_trace(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    horizon: usize,
    rng: SimRng,
    reference: &[f64],
) -> Result<Vec<f64>> {
    if reference.len() != config.n_clients() {
        return Err(Error::validation("reference distribution has wrong length"));
    }
    let mut chain = ChainState::new(profile.clone(), *config, rng)?;
    let mut est = FrequencyEstimator::new(config.n_clients(), config.batch_size());
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        est.observe(&chain.next_batch()?);
        out.push(est.sup_sq_error(reference));
    }
    Ok(out)
}

/// [`estimator_error_trace`] averaged over streams `0..seeds` of `seed`.
pub fn mean_estimator_error(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    horizon: usize,
    seeds: usize,
    seed: u64,
    reference: &[f64],
) -> Result<Vec<f64>> {
    if seeds == 0 {
        return Err(Error::validation("at least one seed is required"));
    }
    let traces: Vec<Vec<f64>> = rng::streams(seed, seeds)
        .into_par_iter()
        .map(|r| estimator_error_trace(profile, config, horizon, r, reference))
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; horizon];
    for tr in &traces {
        mean.iter_mut().zip(tr).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= seeds as f64);
    Ok(mean)
}

/// Writes `client,pi_hat,stderr`.
pub fn write_estimate_csv<W: Write>(est: &MarginalEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["client", "pi_hat", "stderr"])?;
    for (i, (p, s)) in est.pi_hat.iter().zip(&est.stderr).enumerate() {
        w.write_record([i.to_string(), p.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,tv_to_pi`.
pub fn write_evolution_csv<W: Write>(tv: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "tv_to_pi"])?;
    for (t, v) in tv.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Simulates `replicas` chains and writes `replica,t,client,sampled_flag`
/// for every client and round.
pub fn write_raw_traces<W: Write>(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    horizon: usize,
    replicas: usize,
    seed: u64,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "t", "client", "sampled_flag"])?;
    let n = config.n_clients();
    for (k, r) in rng::streams(seed, replicas).into_iter().enumerate() {
        let mut chain = ChainState::new(profile.clone(), *config, r)?;
        for t in 0..horizon {
            let batch = chain.next_batch()?;
            let mut flag = vec![0u8; n];
            batch.members().iter().for_each(|&c| flag[c] = 1);
            for (c, f) in flag.iter().enumerate() {
                w.write_record([k.to_string(), t.to_string(), c.to_string(), f.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

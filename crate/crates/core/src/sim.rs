//! Federated training driven by a participation process.
//!
//! Each round the sampled clients start from the server model `x_t`, run `K`
//! full-gradient steps `x <- x - alpha * nu_i * grad f_i(x)`, and the server
//! takes the plain average of the `B` local models. Vanilla FedAvg uses
//! `nu_i = 1`. The debiased variant keeps per-client participation counters
//! and uses `nu_i = 1 / (lambda_i N)` with `lambda_i = t_i / ((t + 1) B)`.
//! The only randomness is in which clients are sampled.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, ChainState, OrderedBatch};
use crate::error::{Error, Result};
use crate::estimate::FrequencyEstimator;
use crate::objectives::Problem;
use crate::profile::AvailabilityProfile;
use crate::rng::{self, SimRng};

/// Runs stop once the evaluated loss exceeds this value.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Local steps `K`, stepsize `alpha`, rounds `T` and evaluation cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub local_steps: usize,
    pub stepsize: f64,
    pub rounds: usize,
    pub eval_every: usize,
}

impl HyperParams {
    pub fn new(local_steps: usize, stepsize: f64, rounds: usize, eval_every: usize) -> Result<Self> {
        let h = Self {
            local_steps,
            stepsize,
            rounds,
            eval_every,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_steps == 0 || self.rounds == 0 || self.eval_every == 0 {
            return Err(Error::validation(
                "local_steps, rounds and eval_every must be at least 1",
            ));
        }
        if !(self.stepsize > 0.0 && self.stepsize.is_finite()) {
            return Err(Error::validation(format!(
                "stepsize must be positive, got {}",
                self.stepsize
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fedavg,
    Debiased,
    OracleUniform,
    KnownPi,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Fedavg => "fedavg",
            Algorithm::Debiased => "debiased",
            Algorithm::OracleUniform => "oracle_uniform",
            Algorithm::KnownPi => "known_pi",
        }
    }
}

/// Metrics of the server model `x_t` at an evaluation round, with the batch
/// sampled in that round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub t: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub batch: Vec<usize>,
    /// Participation frequencies after round `t` (debiased runs only).
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The model became non-finite or its loss exceeded [`DIVERGENCE_LOSS`].
    Diverged {
        round: usize,
        loss: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub hyper: HyperParams,
    pub n_clients: usize,
    pub batch_size: usize,
    /// `None` for the oracle-uniform baseline.
    pub min_separation: Option<usize>,
    pub records: Vec<EvalRecord>,
    pub final_iterate: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    /// Mean of `||grad F||^2` over the recorded rounds.
    pub mean_grad_norm_sq: f64,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Writes `t,loss,grad_norm_sq,batch_members,lambda_json`; batch members
    /// are `;`-separated and `lambda_json` is empty when not recorded.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "loss", "grad_norm_sq", "batch_members", "lambda_json"])?;
        for r in &self.records {
            let members = r.batch.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
            let lambda = match &r.lambda {
                Some(l) => serde_json::to_string(l)?,
                None => String::new(),
            };
            w.write_record([
                r.t.to_string(),
                r.loss.to_string(),
                r.grad_norm_sq.to_string(),
                members,
                lambda,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Source of one batch per round.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<OrderedBatch>;
}

impl BatchSource for ChainState {
    fn next_batch(&mut self) -> Result<OrderedBatch> {
        ChainState::next_batch(self)
    }
}

/// Independent uniform batches of `B` distinct clients, uniformly ordered.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    n_clients: usize,
    batch_size: usize,
    rng: SimRng,
}

impl UniformSampler {
    pub fn new(n_clients: usize, batch_size: usize, rng: SimRng) -> Result<Self> {
        if batch_size == 0 || batch_size > n_clients {
            return Err(Error::validation(format!(
                "batch size {batch_size} invalid for {n_clients} clients"
            )));
        }
        Ok(Self {
            n_clients,
            batch_size,
            rng,
        })
    }
}

impl BatchSource for UniformSampler {
    fn next_batch(&mut self) -> Result<OrderedBatch> {
        let picked = index::sample(&mut self.rng, self.n_clients, self.batch_size).into_vec();
        Ok(OrderedBatch::from_unchecked(picked))
    }
}

/// How local steps are scaled.
#[derive(Debug, Clone, PartialEq)]
pub enum StepScaling {
    /// `nu_i = 1` (vanilla FedAvg).
    Unit,
    /// `nu_i = 1 / (lambda_i N)` with running participation frequencies.
    Estimated,
    /// `nu_i = 1 / (lambda_i N)` with `lambda` held fixed.
    Frozen(Vec<f64>),
}

/// Runs the training loop for `hyper.rounds` rounds from `problem.initial_point()`.
pub fn train(
    problem: &Problem,
    source: &mut dyn BatchSource,
    batch_size: usize,
    hyper: &HyperParams,
    scaling: &StepScaling,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let n = problem.n_clients();
    let dim = problem.dim();
    let frozen_nu: Option<Vec<f64>> = match scaling {
        StepScaling::Frozen(lambda) => {
            if lambda.len() != n || lambda.iter().any(|&l| l.is_nan() || l <= 0.0) {
                return Err(Error::validation("frozen frequencies must be positive, one per client"));
            }
            Some(lambda.iter().map(|&l| 1.0 / (l * n as f64)).collect())
        }
        _ => None,
    };
    let mut counters = FrequencyEstimator::new(n, batch_size);
    let mut x = problem.initial_point();
    let mut local = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut records = Vec::with_capacity(hyper.rounds.div_ceil(hyper.eval_every));
    let mut status = RunStatus::Completed;

    for t in 0..hyper.rounds {
        let batch = source.next_batch()?;
        if batch.len() != batch_size || batch.members().iter().any(|&c| c >= n) {
            return Err(Error::validation("batch source produced an invalid batch"));
        }
        counters.observe(&batch);

        if t % hyper.eval_every == 0 {
            let m = problem.metrics(&x);
            records.push(EvalRecord {
                t,
                loss: m.loss,
                grad_norm_sq: m.grad_norm_sq,
                batch: batch.members().to_vec(),
                lambda: matches!(scaling, StepScaling::Estimated).then(|| counters.lambdas()),
            });
            if !m.loss.is_finite() || m.loss > DIVERGENCE_LOSS {
                status = RunStatus::Diverged { round: t, loss: m.loss };
                break;
            }
        }

        sum.iter_mut().for_each(|s| *s = 0.0);
        for &i in batch.members() {
            let nu = match (scaling, &frozen_nu) {
                (StepScaling::Unit, _) => 1.0,
                (StepScaling::Estimated, _) => 1.0 / (counters.lambda(i) * n as f64),
                (StepScaling::Frozen(_), Some(nu)) => nu[i],
                (StepScaling::Frozen(_), None) => unreachable!("frozen scaling precomputed"),
            };
            let step = hyper.stepsize * nu;
            local.copy_from_slice(&x);
            let client = problem.client(i);
            for _ in 0..hyper.local_steps {
                client.grad(&local, &mut grad);
                local.iter_mut().zip(&grad).for_each(|(l, g)| *l -= step * g);
            }
            sum.iter_mut().zip(&local).for_each(|(s, l)| *s += l);
        }
        let b = batch_size as f64;
        x.iter_mut().zip(&sum).for_each(|(xi, s)| *xi = s / b);

        if x.iter().any(|v| !v.is_finite()) {
            status = RunStatus::Diverged {
                round: t,
                loss: f64::NAN,
            };
            break;
        }
    }

    let final_metrics = problem.metrics(&x);
    if matches!(status, RunStatus::Completed)
        && (!final_metrics.loss.is_finite() || final_metrics.loss > DIVERGENCE_LOSS)
    {
        status = RunStatus::Diverged {
            round: hyper.rounds,
            loss: final_metrics.loss,
        };
    }
    let mean_grad_norm_sq = if records.is_empty() {
        f64::NAN
    } else {
        records.iter().map(|r| r.grad_norm_sq).sum::<f64>() / records.len() as f64
    };
    Ok(TrainOutcome {
        records,
        final_iterate: x,
        final_loss: final_metrics.loss,
        final_grad_norm_sq: final_metrics.grad_norm_sq,
        mean_grad_norm_sq,
        status,
    })
}

/// Result of [`train`] before it is labelled with run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<EvalRecord>,
    pub final_iterate: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub mean_grad_norm_sq: f64,
    pub status: RunStatus,
}

fn check_sizes(problem: &Problem, profile: &AvailabilityProfile, config: &ChainConfig) -> Result<()> {
    if problem.n_clients() != config.n_clients() || profile.len() != config.n_clients() {
        return Err(Error::validation(format!(
            "problem has {} clients, profile {}, chain {}",
            problem.n_clients(),
            profile.len(),
            config.n_clients()
        )));
    }
    Ok(())
}

fn chain_run(
    algorithm: Algorithm,
    problem: &Problem,
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    hyper: &HyperParams,
    seed: u64,
    scaling: &StepScaling,
) -> Result<RunTrace> {
    check_sizes(problem, profile, config)?;
    let mut chain = ChainState::new(profile.clone(), *config, rng::from_seed(seed))?;
    let out = train(problem, &mut chain, config.batch_size(), hyper, scaling)?;
    Ok(label(
        out,
        algorithm,
        seed,
        hyper,
        config.n_clients(),
        config.batch_size(),
        Some(config.min_separation()),
    ))
}

fn label(
    out: TrainOutcome,
    algorithm: Algorithm,
    seed: u64,
    hyper: &HyperParams,
    n_clients: usize,
    batch_size: usize,
    min_separation: Option<usize>,
) -> RunTrace {
    RunTrace {
        algorithm,
        seed,
        hyper: *hyper,
        n_clients,
        batch_size,
        min_separation,
        records: out.records,
        final_iterate: out.final_iterate,
        final_loss: out.final_loss,
        final_grad_norm_sq: out.final_grad_norm_sq,
        mean_grad_norm_sq: out.mean_grad_norm_sq,
        status: out.status,
    }
}

/// Vanilla FedAvg with batches from the minimum-separation chain.
pub fn run_fedavg(
    problem: &Problem,
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    hyper: &HyperParams,
    seed: u64,
) -> Result<RunTrace> {
    chain_run(
        Algorithm::Fedavg,
        problem,
        profile,
        config,
        hyper,
        seed,
        &StepScaling::Unit,
    )
}

/// Debiasing FedAvg: local steps scaled by `1 / (lambda_i N)` with running
/// participation frequencies.
pub fn run_debiased_fedavg(
    problem: &Problem,
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    hyper: &HyperParams,
    seed: u64,
) -> Result<RunTrace> {
    chain_run(
        Algorithm::Debiased,
        problem,
        profile,
        config,
        hyper,
        seed,
        &StepScaling::Estimated,
    )
}

/// Debiasing FedAvg with the frequency estimates frozen at `lambda`.
/// With `lambda = 1/N` every step is unscaled and the run equals FedAvg.
pub fn run_debiased_fedavg_frozen(
    problem: &Problem,
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    hyper: &HyperParams,
    seed: u64,
    lambda: Vec<f64>,
) -> Result<RunTrace> {
    chain_run(
        Algorithm::Debiased,
        problem,
        profile,
        config,
        hyper,
        seed,
        &StepScaling::Frozen(lambda),
    )
}

/// Reweighting with known marginals: `nu_i = 1 / (pi_i N)`.
pub fn run_known_pi(
    problem: &Problem,
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    hyper: &HyperParams,
    pi: &[f64],
    seed: u64,
) -> Result<RunTrace> {
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > 1e-9 || pi.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::validation("pi must be strictly positive and sum to 1"));
    }
    chain_run(
        Algorithm::KnownPi,
        problem,
        profile,
        config,
        hyper,
        seed,
        &StepScaling::Frozen(pi.to_vec()),
    )
}

/// FedAvg with independent uniform batches and no separation constraint.
pub fn run_oracle_uniform(problem: &Problem, hyper: &HyperParams, batch_size: usize, seed: u64) -> Result<RunTrace> {
    let n = problem.n_clients();
    let mut source = UniformSampler::new(n, batch_size, rng::from_seed(seed))?;
    let out = train(problem, &mut source, batch_size, hyper, &StepScaling::Unit)?;
    Ok(label(out, Algorithm::OracleUniform, seed, hyper, n, batch_size, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::quadratic_toy;

    fn toy_setup(r: usize) -> (Problem, AvailabilityProfile, ChainConfig) {
        (
            quadratic_toy(),
            AvailabilityProfile::from_weights(&[0.25, 0.25, 0.5]).unwrap(),
            ChainConfig::new(3, 1, r).unwrap(),
        )
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperParams::new(0, 0.1, 10, 1).is_err());
        assert!(HyperParams::new(1, 0.0, 10, 1).is_err());
        assert!(HyperParams::new(1, 0.1, 0, 1).is_err());
        assert!(HyperParams::new(1, 0.1, 10, 0).is_err());
    }

    #[test]
    fn record_count() {
        let (p, prof, c) = toy_setup(1);
        for (t, every) in [(10, 3), (9, 3), (1, 5), (100, 1)] {
            let h = HyperParams::new(1, 0.1, t, every).unwrap();
            let tr = run_fedavg(&p, &prof, &c, &h, 0).unwrap();
            assert_eq!(tr.records.len(), t.div_ceil(every));
        }
    }

    #[test]
    fn single_step_closed_form() {
        // K = 1, B = 1: x_{t+1} = (1 - alpha) x_t + alpha * i_t.
        let (p, prof, c) = toy_setup(1);
        let alpha = 0.1;
        let mut x = 0.0;
        for rounds in 1..40 {
            let h = HyperParams::new(1, alpha, rounds, 1).unwrap();
            let tr = run_fedavg(&p, &prof, &c, &h, 17).unwrap();
            let i_t = (tr.records[rounds - 1].batch[0] + 1) as f64;
            x = (1.0 - alpha) * x + alpha * i_t;
            assert!((tr.final_iterate[0] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn full_participation_is_gradient_descent() {
        let p = quadratic_toy();
        let prof = AvailabilityProfile::uniform(3).unwrap();
        let c = ChainConfig::new(3, 3, 0).unwrap();
        let h = HyperParams::new(2, 0.1, 400, 50).unwrap();
        let tr = run_fedavg(&p, &prof, &c, &h, 1).unwrap();
        assert!((tr.final_iterate[0] - 2.0).abs() < 1e-6);
        let o = run_oracle_uniform(&p, &h, 3, 1).unwrap();
        assert!((o.final_iterate[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn first_participation_scale() {
        // nu = (t+1) B / N when t_i = 1
        let mut est = FrequencyEstimator::new(3, 1);
        for t in 0..5 {
            est.observe(&OrderedBatch::new(vec![if t == 4 { 2 } else { t % 2 }], 3).unwrap());
        }
        let nu = 1.0 / (est.lambda(2) * 3.0);
        assert!((nu - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_uniform_lambda_reproduces_fedavg() {
        let (p, prof, c) = toy_setup(1);
        let h = HyperParams::new(5, 0.05, 500, 7).unwrap();
        let a = run_fedavg(&p, &prof, &c, &h, 3).unwrap();
        let b = run_debiased_fedavg_frozen(&p, &prof, &c, &h, 3, vec![1.0 / 3.0; 3]).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_iterate, b.final_iterate);
        let k = run_known_pi(&p, &prof, &c, &h, &[1.0 / 3.0; 3], 3).unwrap();
        assert_eq!(a.final_iterate, k.final_iterate);
    }

    #[test]
    fn debiased_records_lambda() {
        let (p, prof, c) = toy_setup(1);
        let h = HyperParams::new(1, 0.05, 50, 10).unwrap();
        let tr = run_debiased_fedavg(&p, &prof, &c, &h, 3).unwrap();
        for r in &tr.records {
            let l = r.lambda.as_ref().unwrap();
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let v = run_fedavg(&p, &prof, &c, &h, 3).unwrap();
        assert!(v.records.iter().all(|r| r.lambda.is_none()));
    }

    #[test]
    fn server_is_mean_of_local_models() {
        let p = quadratic_toy();
        let prof = AvailabilityProfile::uniform(3).unwrap();
        let c = ChainConfig::new(3, 3, 0).unwrap();
        // one round, all clients, K=1 from x=0: local models alpha * i, average alpha * 2
        let h = HyperParams::new(1, 0.1, 1, 1).unwrap();
        let tr = run_fedavg(&p, &prof, &c, &h, 0).unwrap();
        assert!((tr.final_iterate[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_flagged() {
        let (p, prof, c) = toy_setup(1);
        let h = HyperParams::new(1, 3.5, 200, 1).unwrap();
        let tr = run_fedavg(&p, &prof, &c, &h, 0).unwrap();
        assert!(tr.diverged());
        assert!(tr.records.len() < 200);
    }

    #[test]
    fn size_mismatch_rejected() {
        let p = quadratic_toy();
        let prof = AvailabilityProfile::uniform(4).unwrap();
        let c = ChainConfig::new(4, 1, 1).unwrap();
        let h = HyperParams::new(1, 0.1, 10, 1).unwrap();
        assert!(matches!(run_fedavg(&p, &prof, &c, &h, 0), Err(Error::Validation(_))));
        assert!(run_known_pi(
            &quadratic_toy(),
            &AvailabilityProfile::uniform(3).unwrap(),
            &ChainConfig::new(3, 1, 1).unwrap(),
            &h,
            &[0.5, 0.5, 0.0],
            0
        )
        .is_err());
    }

    #[test]
    fn trace_csv() {
        let (p, prof, c) = toy_setup(1);
        let h = HyperParams::new(1, 0.05, 4, 2).unwrap();
        let tr = run_debiased_fedavg(&p, &prof, &c, &h, 3).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,loss,grad_norm_sq,batch_members,lambda_json");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
    }
}

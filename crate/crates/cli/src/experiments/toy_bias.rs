//! Terminal iterates of FedAvg, Debiasing FedAvg and the known-marginal
//! oracle on the three-client quadratic.

use fedsep_core::sim::{run_debiased_fedavg, run_fedavg, run_known_pi, Algorithm, RunTrace};
use fedsep_core::{enumerate_exact_chain, quadratic_toy, ChainConfig, Result};
use rayon::prelude::*;

use super::{mean_and_stderr, replicate_seed};
use crate::config::ExperimentConfig;
use crate::output::OutputDir;

pub const ALGORITHMS: [Algorithm; 3] = [Algorithm::Fedavg, Algorithm::Debiased, Algorithm::KnownPi];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub x_final: f64,
    pub loss: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySummary {
    pub algorithm: Algorithm,
    pub mean_x_final: f64,
    pub stderr: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub pi: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rows: Vec<ToyRow>,
    pub summary: Vec<ToySummary>,
}

impl Report {
    pub fn summary_for(&self, algorithm: Algorithm) -> &ToySummary {
        self.summary
            .iter()
            .find(|s| s.algorithm == algorithm)
            .expect("all algorithms run")
    }

    /// Minimiser of the participation-weighted objective `sum_i pi_i f_i`.
    pub fn weighted_optimum(&self) -> f64 {
        self.pi.iter().enumerate().map(|(i, p)| p * (i + 1) as f64).sum()
    }
}

fn row(algorithm: Algorithm, seed: u64, tr: RunTrace) -> ToyRow {
    ToyRow {
        algorithm,
        seed,
        x_final: tr.final_iterate[0],
        loss: tr.final_loss,
        diverged: tr.diverged(),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let toy = cfg.toy.as_ref().expect("resolved");
    let hyper = cfg.hyper.expect("resolved");
    let problem = quadratic_toy();
    let profile = cfg.profile.as_ref().expect("resolved").build(problem.n_clients())?;
    let config = ChainConfig::new(problem.n_clients(), 1, toy.min_separation)?;
    let pi = enumerate_exact_chain(&profile, &config, &Default::default())?
        .marginal()
        .to_vec();
    let seeds: Vec<u64> = (0..toy.seeds).map(|k| replicate_seed(cfg.seed(), k)).collect();

    let per_seed: Vec<[ToyRow; 3]> = seeds
        .par_iter()
        .map(|&s| -> Result<_> {
            Ok([
                row(
                    Algorithm::Fedavg,
                    s,
                    run_fedavg(&problem, &profile, &config, &hyper, s)?,
                ),
                row(
                    Algorithm::Debiased,
                    s,
                    run_debiased_fedavg(&problem, &profile, &config, &hyper, s)?,
                ),
                row(
                    Algorithm::KnownPi,
                    s,
                    run_known_pi(&problem, &profile, &config, &hyper, &pi, s)?,
                ),
            ])
        })
        .collect::<Result<_>>()?;

    let rows: Vec<ToyRow> = ALGORITHMS
        .iter()
        .enumerate()
        .flat_map(|(a, _)| per_seed.iter().map(move |r| r[a].clone()))
        .collect();
    let summary = ALGORITHMS
        .iter()
        .map(|&algorithm| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.algorithm == algorithm)
                .map(|r| r.x_final)
                .collect();
            let (mean_x_final, stderr) = mean_and_stderr(&xs);
            ToySummary {
                algorithm,
                mean_x_final,
                stderr,
                diverged: rows.iter().filter(|r| r.algorithm == algorithm && r.diverged).count(),
            }
        })
        .collect();
    Ok(Report {
        pi,
        seeds,
        rows,
        summary,
    })
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let mut w = out.csv("toy_bias.csv")?;
    w.write_record(["algorithm", "seed", "x_T", "mean_x_T", "F(x_T)", "diverged"])?;
    for r in &report.rows {
        let mean = report.summary_for(r.algorithm).mean_x_final;
        w.write_record([
            r.algorithm.as_str().to_string(),
            r.seed.to_string(),
            r.x_final.to_string(),
            mean.to_string(),
            r.loss.to_string(),
            r.diverged.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("toy_summary.csv")?;
    w.write_record([
        "algorithm",
        "seeds",
        "mean_x_T",
        "stderr",
        "diverged",
        "weighted_optimum",
        "uniform_optimum",
    ])?;
    for s in &report.summary {
        w.write_record([
            s.algorithm.as_str().to_string(),
            report.seeds.len().to_string(),
            s.mean_x_final.to_string(),
            s.stderr.to_string(),
            s.diverged.to_string(),
            report.weighted_optimum().to_string(),
            "2".to_string(),
        ])?;
    }
    w.flush()?;
    out.replicate_seeds = report.seeds.clone();
    Ok(())
}

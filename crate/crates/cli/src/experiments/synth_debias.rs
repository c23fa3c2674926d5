//! FedAvg and Debiasing FedAvg on the grouped synthetic problem across
//! separations, against the oracle-uniform reference.

use std::fs;

use fedsep_core::objectives::SyntheticDataset;
use fedsep_core::sim::{run_debiased_fedavg, run_fedavg, run_oracle_uniform, Algorithm, RunTrace};
use fedsep_core::{group_problem, ChainConfig, GroupMap, Problem, Result};
use rayon::prelude::*;

use super::{mean_and_stderr, replicate_seed};
use crate::config::ExperimentConfig;
use crate::output::{git_style_hash, DatasetRecord, OutputDir};

#[derive(Debug, Clone)]
pub struct Run {
    /// `None` for the oracle-uniform baseline.
    pub r: Option<usize>,
    pub trace: RunTrace,
    pub terminal_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub r: Option<usize>,
    pub runs: usize,
    pub diverged: usize,
    pub mean_terminal_loss: f64,
    pub stderr: f64,
    /// Mean over seeds of the paired difference to the oracle's terminal loss.
    pub gap_to_oracle: f64,
    pub gap_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub dataset: SyntheticDataset,
    pub seeds: Vec<u64>,
    pub runs: Vec<Run>,
    pub summary: Vec<SummaryRow>,
}

impl Report {
    pub fn summary_for(&self, algorithm: Algorithm, r: Option<usize>) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.algorithm == algorithm && s.r == r)
    }
}

/// Mean of the last `window` losses of `[record losses..., final loss]`.
pub fn terminal_loss(trace: &RunTrace, window: usize) -> f64 {
    let mut losses: Vec<f64> = trace.records.iter().map(|r| r.loss).collect();
    losses.push(trace.final_loss);
    let tail = &losses[losses.len().saturating_sub(window)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Builds the grouped problem the experiment trains on.
pub fn grouped_problem(cfg: &ExperimentConfig, dataset: &SyntheticDataset) -> Result<(Problem, GroupMap)> {
    let g = cfg.grouping.as_ref().expect("resolved");
    let availability = cfg.profile.as_ref().expect("resolved").build(g.n_groups)?;
    let map = GroupMap::contiguous(dataset.spec.n_clients, availability)?;
    Ok((group_problem(&dataset.to_problem(), &map)?, map))
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Chain(Algorithm, usize, u64),
    Oracle(u64),
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let synth = cfg.synth.as_ref().expect("resolved");
    let hyper = cfg.hyper.expect("resolved");
    let dataset = SyntheticDataset::generate(cfg.synthetic.as_ref().expect("resolved"))?;
    let (problem, map) = grouped_problem(cfg, &dataset)?;
    let seeds: Vec<u64> = (0..synth.seeds).map(|k| replicate_seed(cfg.seed(), k)).collect();

    let mut jobs = Vec::new();
    for &r in &synth.r_values {
        for alg in [Algorithm::Fedavg, Algorithm::Debiased] {
            jobs.extend(seeds.iter().map(|&s| Job::Chain(alg, r, s)));
        }
    }
    jobs.extend(seeds.iter().map(|&s| Job::Oracle(s)));

    let runs: Vec<Run> = jobs
        .into_par_iter()
        .map(|job| -> Result<Run> {
            let (r, trace) = match job {
                Job::Chain(alg, r, s) => {
                    let config = ChainConfig::new(map.n_groups(), synth.batch_size, r)?;
                    let trace = match alg {
                        Algorithm::Fedavg => run_fedavg(&problem, map.availability(), &config, &hyper, s)?,
                        _ => run_debiased_fedavg(&problem, map.availability(), &config, &hyper, s)?,
                    };
                    (Some(r), trace)
                }
                Job::Oracle(s) => (None, run_oracle_uniform(&problem, &hyper, synth.batch_size, s)?),
            };
            let terminal_loss = if trace.diverged() {
                f64::NAN
            } else {
                terminal_loss(&trace, synth.terminal_window)
            };
            Ok(Run {
                r,
                trace,
                terminal_loss,
            })
        })
        .collect::<Result<_>>()?;

    let oracle: Vec<f64> = runs.iter().filter(|r| r.r.is_none()).map(|r| r.terminal_loss).collect();
    let mut groups: Vec<(Algorithm, Option<usize>)> = Vec::new();
    for &r in &synth.r_values {
        groups.push((Algorithm::Fedavg, Some(r)));
        groups.push((Algorithm::Debiased, Some(r)));
    }
    groups.push((Algorithm::OracleUniform, None));
    let summary = groups
        .into_iter()
        .map(|(algorithm, r)| {
            let sel: Vec<&Run> = runs
                .iter()
                .filter(|x| x.trace.algorithm == algorithm && x.r == r)
                .collect();
            let losses: Vec<f64> = sel.iter().map(|x| x.terminal_loss).collect();
            // Runs are in seed order for every group, so the oracle pairs up by index.
            let gaps: Vec<f64> = losses.iter().zip(&oracle).map(|(l, o)| l - o).collect();
            let (mean_terminal_loss, stderr) = mean_and_stderr(&losses);
            let (gap_to_oracle, gap_stderr) = mean_and_stderr(&gaps);
            SummaryRow {
                algorithm,
                r,
                runs: sel.len(),
                diverged: sel.iter().filter(|x| x.trace.diverged()).count(),
                mean_terminal_loss,
                stderr,
                gap_to_oracle,
                gap_stderr,
            }
        })
        .collect();
    Ok(Report {
        dataset,
        seeds,
        runs,
        summary,
    })
}

fn opt(r: Option<usize>) -> String {
    r.map(|r| r.to_string()).unwrap_or_default()
}

pub fn write(report: &Report, out: &mut OutputDir) -> Result<()> {
    let dir = out.path("dataset");
    fs::create_dir_all(&dir)?;
    report.dataset.export(&dir, "synthetic")?;
    let manifest = fs::read(dir.join("synthetic.json"))?;
    let data = fs::read(dir.join("synthetic.csv"))?;
    out.record("dataset/synthetic.json");
    out.record("dataset/synthetic.csv");
    out.dataset = Some(DatasetRecord {
        manifest: "dataset/synthetic.json".into(),
        manifest_hash: git_style_hash(&manifest),
        data_file: "dataset/synthetic.csv".into(),
        data_hash: git_style_hash(&data),
    });

    let mut w = out.csv("traces.csv")?;
    w.write_record(["algorithm", "R", "seed", "t", "loss", "grad_norm_sq"])?;
    for run in &report.runs {
        let (a, r, s) = (run.trace.algorithm.as_str(), opt(run.r), run.trace.seed.to_string());
        for rec in &run.trace.records {
            w.write_record([
                a,
                &r,
                &s,
                &rec.t.to_string(),
                &rec.loss.to_string(),
                &rec.grad_norm_sq.to_string(),
            ])?;
        }
        w.write_record([
            a,
            &r,
            &s,
            &run.trace.hyper.rounds.to_string(),
            &run.trace.final_loss.to_string(),
            &run.trace.final_grad_norm_sq.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("terminal.csv")?;
    w.write_record([
        "algorithm",
        "R",
        "seed",
        "terminal_loss",
        "final_loss",
        "mean_grad_norm_sq",
        "status",
    ])?;
    for run in &report.runs {
        let status = match run.trace.status {
            fedsep_core::sim::RunStatus::Completed => "completed".to_string(),
            fedsep_core::sim::RunStatus::Diverged { round, .. } => format!("diverged@{round}"),
        };
        w.write_record([
            run.trace.algorithm.as_str().to_string(),
            opt(run.r),
            run.trace.seed.to_string(),
            run.terminal_loss.to_string(),
            run.trace.final_loss.to_string(),
            run.trace.mean_grad_norm_sq.to_string(),
            status,
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("summary.csv")?;
    w.write_record([
        "algorithm",
        "R",
        "runs",
        "diverged",
        "mean_terminal_loss",
        "stderr",
        "gap_to_oracle",
        "gap_stderr",
    ])?;
    for s in &report.summary {
        w.write_record([
            s.algorithm.as_str().to_string(),
            opt(s.r),
            s.runs.to_string(),
            s.diverged.to_string(),
            s.mean_terminal_loss.to_string(),
            s.stderr.to_string(),
            s.gap_to_oracle.to_string(),
            s.gap_stderr.to_string(),
        ])?;
    }
    w.flush()?;
    for s in report.summary.iter().filter(|s| s.diverged > 0) {
        out.warn(format!(
            "{} R={}: {} of {} runs diverged",
            s.algorithm.as_str(),
            opt(s.r),
            s.diverged,
            s.runs
        ));
    }
    out.replicate_seeds = report.seeds.clone();
    Ok(())
}

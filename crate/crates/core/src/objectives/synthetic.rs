//! Heterogeneous robust-regression data.
//!
//! Draw order from `rng::from_seed(seed)` (xoshiro256++), all normals via
//! `rand_distr::StandardNormal` (ziggurat), scaled:
//!
//! 1. `alpha ~ N(0, hyper_mean_var)`
//! 2. for each client `i = 1..=N` in order:
//!    `mu_i ~ N(alpha, 1)`; `theta_i ~ N(mu_i 1, I_d)` (d draws);
//!    `A_i` row-major, entries `~ N(0, (feature_scale * i)^-2)`;
//!    `eps_i ~ N(0, label_noise_std^2 I)`; `b_i = A_i theta_i + eps_i`.
//!
//! Client loss: `f_i(x) = (1/n_i) sum_j ln(((<A_i[j,:], x> + b_i[j])^2)/2 + 1)`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LocalObjective, Problem};
use crate::error::{Error, Result};
use crate::rng;

/// Generation parameters. Defaults: 100 clients, `d = 20`, 100 samples each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_clients: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Client `i` (1-based) has feature std `1 / (feature_scale * i)`.
    pub feature_scale: f64,
    pub label_noise_std: f64,
    /// Variance of the shared hyper-mean `alpha`.
    pub hyper_mean_var: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clients: 100,
            dim: 20,
            samples_per_client: 100,
            feature_scale: 0.5,
            label_noise_std: 0.5,
            hyper_mean_var: 100.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 || self.dim == 0 || self.samples_per_client == 0 {
            return Err(Error::validation("synthetic counts must be positive"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.feature_scale) || !positive(self.label_noise_std) || !positive(self.hyper_mean_var) {
            return Err(Error::validation("synthetic scales must be positive"));
        }
        Ok(())
    }
}

/// One client's features (row-major, `n x d`) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClient {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    dim: usize,
}

impl SyntheticClient {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim || labels.is_empty() {
            return Err(Error::validation("feature matrix shape does not match labels"));
        }
        Ok(Self { features, labels, dim })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    fn residual(&self, j: usize, x: &[f64]) -> f64 {
        self.row(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.labels[j]
    }
}

impl LocalObjective for SyntheticClient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let n = self.n_samples();
        (0..n).map(|j| (0.5 * self.residual(j, x).powi(2)).ln_1p()).sum::<f64>() / n as f64
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n = self.n_samples();
        for j in 0..n {
            let r = self.residual(j, x);
            let s = r / (0.5 * r * r + 1.0);
            out.iter_mut().zip(self.row(j)).for_each(|(o, a)| *o += s * a);
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
}

/// A generated dataset together with the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub clients: Vec<SyntheticClient>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    spec: SyntheticSpec,
    data_file: String,
}

const FORMAT: &str = "fedsep-synthetic-v1";

impl SyntheticDataset {
    pub fn generate(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::from_seed(spec.seed);
        let mut normal = move || -> f64 { r.sample(StandardNormal) };
        let alpha = spec.hyper_mean_var.sqrt() * normal();
        let (n, d) = (spec.samples_per_client, spec.dim);
        let clients = (1..=spec.n_clients)
            .map(|i| {
                let mu = alpha + normal();
                let theta: Vec<f64> = (0..d).map(|_| mu + normal()).collect();
                let std = 1.0 / (spec.feature_scale * i as f64);
                let features: Vec<f64> = (0..n * d).map(|_| std * normal()).collect();
                let labels = (0..n)
                    .map(|j| {
                        let row = &features[j * d..(j + 1) * d];
                        let clean: f64 = row.iter().zip(&theta).map(|(a, t)| a * t).sum();
                        clean + spec.label_noise_std * normal()
                    })
                    .collect();
                SyntheticClient {
                    features,
                    labels,
                    dim: d,
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            clients,
        })
    }

    pub fn to_problem(&self) -> Problem {
        let clients = self
            .clients
            .iter()
            .map(|c| Arc::new(c.clone()) as Arc<dyn LocalObjective>)
            .collect();
        Problem::new("synthetic", clients).expect("generated dataset is well formed")
    }

    /// Writes `<stem>.csv` (`client_id,row,f0..f{d-1},label`) and
    /// `<stem>.json` (format tag and generating spec) into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        let data_file = format!("{stem}.csv");
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(&data_file))?));
        let d = self.spec.dim;
        let mut header = vec!["client_id".to_string(), "row".to_string()];
        header.extend((0..d).map(|k| format!("f{k}")));
        header.push("label".into());
        w.write_record(&header)?;
        for (i, c) in self.clients.iter().enumerate() {
            for j in 0..c.n_samples() {
                let mut rec = vec![i.to_string(), j.to_string()];
                rec.extend(c.row(j).iter().map(f64::to_string));
                rec.push(c.labels[j].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        let manifest = Manifest {
            format: FORMAT.into(),
            spec: self.spec.clone(),
            data_file,
        };
        serde_json::to_writer_pretty(File::create(dir.join(format!("{stem}.json")))?, &manifest)?;
        Ok(())
    }

    /// Reads a dataset written by [`SyntheticDataset::export`], given the manifest path.
    pub fn import(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(manifest_path)?))?;
        if manifest.format != FORMAT {
            return Err(Error::validation(format!("unknown dataset format {}", manifest.format)));
        }
        let spec = manifest.spec;
        spec.validate()?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(dir.join(&manifest.data_file))?));
        let d = spec.dim;
        let mut feats = vec![Vec::new(); spec.n_clients];
        let mut labels = vec![Vec::new(); spec.n_clients];
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 3 {
                return Err(Error::validation("dataset row has wrong width"));
            }
            let parse =
                |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::validation(format!("bad number {s:?}"))) };
            let i: usize = rec[0]
                .parse()
                .ok()
                .filter(|&i: &usize| i < spec.n_clients)
                .ok_or_else(|| Error::validation("bad client id"))?;
            for k in 0..d {
                feats[i].push(parse(&rec[2 + k])?);
            }
            labels[i].push(parse(&rec[2 + d])?);
        }
        let clients = feats
            .into_iter()
            .zip(labels)
            .map(|(f, l)| SyntheticClient::new(f, l, d))
            .collect::<Result<_>>()?;
        Ok(Self { spec, clients })
    }
}

/// Generates the synthetic problem for `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Problem> {
    Ok(SyntheticDataset::generate(spec)?.to_problem())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::fd;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_clients: 6,
            samples_per_client: 15,
            seed: 3,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_generation() {
        let a = SyntheticDataset::generate(&small()).unwrap();
        let b = SyntheticDataset::generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = SyntheticDataset::generate(&SyntheticSpec { seed: 4, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_shape() {
        let ds = SyntheticDataset::generate(&SyntheticSpec::default()).unwrap();
        assert_eq!(ds.clients.len(), 100);
        assert!(ds.clients.iter().all(|c| c.n_samples() == 100 && c.dim() == 20));
    }

    #[test]
    fn feature_scale_shrinks_with_index() {
        let ds = SyntheticDataset::generate(&SyntheticSpec {
            samples_per_client: 200,
            ..small()
        })
        .unwrap();
        let sd = |c: &SyntheticClient| (c.features.iter().map(|v| v * v).sum::<f64>() / c.features.len() as f64).sqrt();
        // client 1 has std 2, client 6 has std 1/3
        assert!((sd(&ds.clients[0]) - 2.0).abs() < 0.1);
        assert!((sd(&ds.clients[5]) - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn gradient_at_origin_matches_finite_differences() {
        let ds = SyntheticDataset::generate(&small()).unwrap();
        let x = vec![0.0; 20];
        for c in &ds.clients {
            let mut g = vec![0.0; 20];
            c.grad(&x, &mut g);
            let num = fd::gradient(c, &x, 1e-5);
            assert!(fd::rel_error(&g, &num) < 1e-6);
        }
    }

    #[test]
    fn metrics_match_direct_summation() {
        let ds = SyntheticDataset::generate(&small()).unwrap();
        let p = ds.to_problem();
        let x: Vec<f64> = (0..20).map(|k| 0.01 * k as f64 - 0.1).collect();
        let mut total = 0.0;
        let mut count = 0;
        for c in &ds.clients {
            let mut s = 0.0;
            for j in 0..c.n_samples() {
                let r: f64 = c.row(j).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + c.labels[j];
                s += (0.5 * r * r + 1.0).ln();
            }
            total += s / c.n_samples() as f64;
            count += 1;
        }
        let m = p.metrics(&x);
        assert!((m.loss - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn export_import_round_trip() {
        let ds = SyntheticDataset::generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.export(dir.path(), "data").unwrap();
        let back = SyntheticDataset::import(&dir.path().join("data.json")).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(SyntheticSpec { dim: 0, ..small() }.validate().is_err());
        assert!(SyntheticSpec {
            feature_scale: -1.0,
            ..small()
        }
        .validate()
        .is_err());
    }
}

//! Local objectives `f_i` and the global average `F = (1/N) sum_i f_i`.

mod grouped;
mod quadratic;
mod synthetic;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use grouped::{group_problem, GroupMap};
pub use quadratic::{quadratic_toy, Quadratic};
pub use synthetic::{generate_synthetic, SyntheticClient, SyntheticDataset, SyntheticSpec};

/// One client's loss and gradient.
pub trait LocalObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn loss(&self, x: &[f64]) -> f64;

    /// Writes `grad f(x)` into `out`.
    fn grad(&self, x: &[f64], out: &mut [f64]);
}

/// A federated problem: one local objective per client.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    dim: usize,
    clients: Vec<Arc<dyn LocalObjective>>,
    optimum_hint: Option<Vec<f64>>,
}

/// Full-population loss and squared gradient norm at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMetrics {
    pub loss: f64,
    pub grad_norm_sq: f64,
}

impl Problem {
    pub fn new(name: impl Into<String>, clients: Vec<Arc<dyn LocalObjective>>) -> Result<Self> {
        let dim = clients
            .first()
            .ok_or_else(|| Error::validation("problem needs at least one client"))?
            .dim();
        if clients.iter().any(|c| c.dim() != dim) {
            return Err(Error::validation("clients disagree on dimension"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            clients,
            optimum_hint: None,
        })
    }

    pub fn with_optimum_hint(mut self, x: Vec<f64>) -> Self {
        self.optimum_hint = Some(x);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn optimum_hint(&self) -> Option<&[f64]> {
        self.optimum_hint.as_deref()
    }

    pub fn client(&self, i: usize) -> &Arc<dyn LocalObjective> {
        &self.clients[i]
    }

    pub fn clients(&self) -> &[Arc<dyn LocalObjective>] {
        &self.clients
    }

    pub fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    /// `F(x)` and `||grad F(x)||^2`.
    pub fn metrics(&self, x: &[f64]) -> GlobalMetrics {
        let n = self.n_clients() as f64;
        let (mut loss, mut grad) = self.sum_terms(x, None);
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        GlobalMetrics {
            loss,
            grad_norm_sq: norm_sq(&grad),
        }
    }

    /// `F_w(x) = sum_i w_i f_i(x)` and its squared gradient norm.
    pub fn weighted_metrics(&self, x: &[f64], w: &[f64]) -> Result<GlobalMetrics> {
        if w.len() != self.n_clients() {
            return Err(Error::validation("weight vector has wrong length"));
        }
        let (loss, grad) = self.sum_terms(x, Some(w));
        Ok(GlobalMetrics {
            loss,
            grad_norm_sq: norm_sq(&grad),
        })
    }

    // Evaluates clients in parallel, sums in client order.
    fn sum_terms(&self, x: &[f64], w: Option<&[f64]>) -> (f64, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = self
            .clients
            .par_iter()
            .map(|c| {
                let mut g = vec![0.0; self.dim];
                c.grad(x, &mut g);
                (c.loss(x), g)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for (i, (l, g)) in parts.iter().enumerate() {
            match w {
                Some(w) => {
                    loss += w[i] * l;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += w[i] * b);
                }
                None => {
                    loss += l;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
        (loss, grad)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `(F(x), ||grad F(x)||^2)`, exact over all clients.
pub fn global_metrics(problem: &Problem, x: &[f64]) -> GlobalMetrics {
    problem.metrics(x)
}

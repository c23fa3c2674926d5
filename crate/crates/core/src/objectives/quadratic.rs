use std::sync::Arc;

use super::{LocalObjective, Problem};

/// `f(x) = (1/2) ||x - center||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
}

impl LocalObjective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = a - c;
        }
    }
}

/// Three scalar clients `f_i(x) = (x - i)^2 / 2`, `i = 1, 2, 3`. `F` is
/// minimized at 2; a `w`-weighted objective at `sum_i w_i i`.
pub fn quadratic_toy() -> Problem {
    let clients = (1..=3)
        .map(|i| Arc::new(Quadratic { center: vec![i as f64] }) as Arc<dyn LocalObjective>)
        .collect();
    Problem::new("quadratic_toy", clients)
        .expect("toy problem is well formed")
        .with_optimum_hint(vec![2.0])
}

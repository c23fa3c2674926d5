use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Tolerance on the normalization of a profile.
pub const PROFILE_SUM_TOL: f64 = 1e-12;

/// Per-client availability probabilities: strictly positive, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AvailabilityProfile {
    p: Vec<f64>,
}

impl AvailabilityProfile {
    /// Normalizes positive weights into a profile.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        make_profile(weights)
    }

    /// Equal availability for `n` clients.
    pub fn uniform(n: usize) -> Result<Self> {
        make_profile(&vec![1.0; n])
    }

    /// Long-tailed profile with `p_i ∝ i^(-exponent)` for `i = 1..=n`.
    pub fn power_law(n: usize, exponent: f64) -> Result<Self> {
        let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-exponent)).collect();
        make_profile(&w)
    }

    /// Random profile with i.i.d. `U(0, 1]` weights.
    pub fn random(n: usize, rng: &mut SimRng) -> Result<Self> {
        let w: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        make_profile(&w)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, i: usize) -> f64 {
        self.p[i]
    }
}

impl TryFrom<Vec<f64>> for AvailabilityProfile {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::validation("availability profile is empty"));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::validation(format!(
                "availability of client {i} must be positive, got {v}"
            )));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > PROFILE_SUM_TOL {
            return Err(Error::validation(format!(
                "availability probabilities sum to {s}, expected 1"
            )));
        }
        Ok(Self { p })
    }
}

impl From<AvailabilityProfile> for Vec<f64> {
    fn from(p: AvailabilityProfile) -> Self {
        p.p
    }
}

/// Normalizes strictly positive weights into an [`AvailabilityProfile`].
pub fn make_profile(weights: &[f64]) -> Result<AvailabilityProfile> {
    if weights.is_empty() {
        return Err(Error::validation("weights vector is empty"));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::validation(format!(
                "weight of client {i} must be positive and finite, got {w}"
            )));
        }
    }
    let total: f64 = weights.iter().sum();
    let p = weights.iter().map(|w| w / total).collect();
    Ok(AvailabilityProfile { p })
}

//! The R-order participation chain.
//!
//! A round samples one ordered batch of `B` clients. A client that took part
//! in any of the last `R` rounds is unavailable; among the remaining clients an
//! unordered batch `S` is drawn with probability proportional to `sum_{i in S} p_i`
//! and its members are put in uniformly random order.
//!
//! Lifting the process onto windows of the last `R` batches gives a
//! first-order chain. [`exact`] enumerates it, [`sampler`] simulates it and
//! [`mixing`] holds the convergence diagnostics.

pub mod exact;
pub mod export;
pub mod mixing;
pub mod sampler;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{enumerate_exact_chain, ExactChain, ExactOptions, SparseMatrix};
pub use mixing::{chain_period, column_sums, distance_to_uniform, mixing_time, tv_decay};
pub use sampler::{sample_next_batch, ChainState};

/// Population, batch and separation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawChainConfig", into = "RawChainConfig")]
pub struct ChainConfig {
    n_clients: usize,
    batch_size: usize,
    min_separation: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChainConfig {
    n_clients: usize,
    batch_size: usize,
    min_separation: usize,
}

impl TryFrom<RawChainConfig> for ChainConfig {
    type Error = Error;

    fn try_from(r: RawChainConfig) -> Result<Self> {
        ChainConfig::new(r.n_clients, r.batch_size, r.min_separation)
    }
}

impl From<ChainConfig> for RawChainConfig {
    fn from(c: ChainConfig) -> Self {
        RawChainConfig {
            n_clients: c.n_clients,
            batch_size: c.batch_size,
            min_separation: c.min_separation,
        }
    }
}

impl ChainConfig {
    /// Requires `B | N` and `R <= N/B - 1`.
    pub fn new(n_clients: usize, batch_size: usize, min_separation: usize) -> Result<Self> {
        if n_clients == 0 || batch_size == 0 {
            return Err(Error::validation("n_clients and batch_size must be positive"));
        }
        if !n_clients.is_multiple_of(batch_size) {
            return Err(Error::validation(format!(
                "batch size {batch_size} does not divide {n_clients} clients"
            )));
        }
        let m = n_clients / batch_size;
        if min_separation > m - 1 {
            return Err(Error::validation(format!(
                "minimum separation {min_separation} exceeds M - 1 = {}",
                m - 1
            )));
        }
        Ok(Self {
            n_clients,
            batch_size,
            min_separation,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn min_separation(&self) -> usize {
        self.min_separation
    }

    /// `M = N / B`.
    pub fn n_batches(&self) -> usize {
        self.n_clients / self.batch_size
    }

    /// `R = M - 1`: batches rotate in a fixed order.
    pub fn is_cyclic(&self) -> bool {
        self.min_separation == self.n_batches() - 1
    }

    /// Clients eligible once the window is full: `B (M - R)`.
    pub fn available_in_steady_state(&self) -> usize {
        self.batch_size * (self.n_batches() - self.min_separation)
    }

    pub fn with_separation(&self, min_separation: usize) -> Result<Self> {
        Self::new(self.n_clients, self.batch_size, min_separation)
    }

    /// Number of augmented states `d(M, R) = prod_{k<R} sigma(B(M-k), B)`,
    /// or `None` on overflow.
    pub fn state_count(&self) -> Option<u128> {
        let (b, m) = (self.batch_size as u128, self.n_batches() as u128);
        (0..self.min_separation as u128).try_fold(1u128, |acc, k| acc.checked_mul(falling_factorial(b * (m - k), b)?))
    }
}

/// `sigma(n, k) = n! / (n - k)!`, the number of ordered `k`-subsets of `n` items.
pub fn falling_factorial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    (0..k).try_fold(1u128, |acc, j| acc.checked_mul(n - j))
}

/// An ordered batch of distinct clients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderedBatch(Vec<usize>);

impl OrderedBatch {
    pub fn new(members: Vec<usize>, n_clients: usize) -> Result<Self> {
        let mut seen = vec![false; n_clients];
        for &m in &members {
            if m >= n_clients {
                return Err(Error::validation(format!("client {m} out of range")));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::validation(format!("client {m} repeated in batch")));
            }
        }
        Ok(Self(members))
    }

    pub(crate) fn from_unchecked(members: Vec<usize>) -> Self {
        Self(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The client in the first position.
    pub fn leader(&self) -> usize {
        self.0[0]
    }

    /// Members in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.0.clone();
        v.sort_unstable();
        v
    }
}

/// The most recent batches, newest first. Batches are pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoryWindow {
    recent: VecDeque<OrderedBatch>,
}

impl HistoryWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a window from batches listed newest first.
    pub fn from_batches(batches: Vec<OrderedBatch>, config: &ChainConfig) -> Result<Self> {
        if batches.len() > config.min_separation() {
            return Err(Error::validation(format!(
                "history of {} batches exceeds separation {}",
                batches.len(),
                config.min_separation()
            )));
        }
        let mut seen = vec![false; config.n_clients()];
        for b in &batches {
            if b.len() != config.batch_size() {
                return Err(Error::validation("history batch has wrong size"));
            }
            for &m in b.members() {
                if m >= config.n_clients() || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::validation(format!(
                        "history batches are not disjoint (client {m})"
                    )));
                }
            }
        }
        Ok(Self { recent: batches.into() })
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &OrderedBatch> {
        self.recent.iter()
    }

    pub fn newest(&self) -> Option<&OrderedBatch> {
        self.recent.front()
    }

    /// Pushes `batch` as newest; returns the batch that fell out of a window of
    /// capacity `capacity`, if any.
    pub(crate) fn push(&mut self, batch: OrderedBatch, capacity: usize) -> Option<OrderedBatch> {
        if capacity == 0 {
            return Some(batch);
        }
        self.recent.push_front(batch);
        if self.recent.len() > capacity {
            self.recent.pop_back()
        } else {
            None
        }
    }

    /// Clients in the window, newest batch first.
    pub fn flatten(&self) -> Vec<usize> {
        self.recent.iter().flat_map(|b| b.members().iter().copied()).collect()
    }
}

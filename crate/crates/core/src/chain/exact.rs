//! Exact enumeration of the augmented first-order chain.
//!
//! A state is the window `(I_1, ..., I_R)` of the last `R` ordered batches,
//! newest first. Flattened, a window is a sequence of `R B` distinct clients,
//! and every such sequence is a reachable window, so the state space is the
//! set of partial permutations of length `R B` of `[N]`. States are stored in
//! lexicographic order of the flattened tuples; the index of a state is its
//! mixed-radix (partial Lehmer) rank, so no lookup table is needed.
//!
//! From window `(I_1, ..., I_R)` the chain moves to `(I_0, I_1, ..., I_{R-1})`
//! for each ordered batch `I_0` of available clients, with probability
//! `p_{I_0} / sum_J p_J` where `p_J` is the sum of member availabilities and
//! the sum ranges over all ordered batches of available clients.

use rayon::prelude::*;
use serde::Serialize;

use super::{mixing, ChainConfig, OrderedBatch};
use crate::error::{Error, Result};
use crate::profile::AvailabilityProfile;

/// Size limits and solver settings for [`enumerate_exact_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactOptions {
    /// Largest admissible `d(M, R)`.
    pub max_states: u128,
    /// Largest admissible number of stored transition entries.
    pub max_nonzeros: u128,
    /// L1 residual target for the stationary solve.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            max_states: 2_000_000,
            max_nonzeros: 50_000_000,
            tol: 1e-12,
            max_iters: 1_000_000,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>, n_cols: usize) -> Self {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, value)` pairs of row `i`, in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// `v^T A`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.left_mul_into(v, &mut out);
        out
    }

    pub fn left_mul_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (c, a) in self.row(i) {
                out[c] += vi * a;
            }
        }
    }

    /// All `(row, column, value)` entries in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.left_mul(&vec![1.0; self.n_rows()])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_cols]; self.n_rows()];
        for (r, c, v) in self.triples() {
            m[r][c] = v;
        }
        m
    }
}

/// The enumerated augmented chain with its stationary and marginal distributions.
#[derive(Debug, Clone)]
pub struct ExactChain {
    config: ChainConfig,
    profile: AvailabilityProfile,
    window_len: usize,
    states: Vec<u16>,
    transition: SparseMatrix,
    observation: SparseMatrix,
    period: usize,
    stationary: Vec<f64>,
    marginal: Vec<f64>,
}

impl ExactChain {
    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn profile(&self) -> &AvailabilityProfile {
        &self.profile
    }

    /// `d(M, R)`.
    pub fn n_states(&self) -> usize {
        self.transition.n_rows()
    }

    /// Flattened window of state `i`, newest batch first.
    pub fn state(&self, i: usize) -> &[u16] {
        &self.states[i * self.window_len..(i + 1) * self.window_len]
    }

    /// Window of state `i` as batches, newest first.
    pub fn state_batches(&self, i: usize) -> Vec<OrderedBatch> {
        self.state(i)
            .chunks(self.config.batch_size())
            .map(|c| OrderedBatch::from_unchecked(c.iter().map(|&x| x as usize).collect()))
            .collect()
    }

    /// Index of a flattened window, if it is a valid state.
    pub fn index_of(&self, window: &[usize]) -> Option<usize> {
        if window.len() != self.window_len {
            return None;
        }
        let n = self.config.n_clients();
        let mut seen = vec![false; n];
        for &c in window {
            if c >= n || std::mem::replace(&mut seen[c], true) {
                return None;
            }
        }
        Some(rank(window, n))
    }

    /// Transition matrix `P_R`.
    pub fn transition(&self) -> &SparseMatrix {
        &self.transition
    }

    /// Observation matrix `Q_R` (states x clients): probability that the next
    /// batch is led by each client.
    pub fn observation(&self) -> &SparseMatrix {
        &self.observation
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period == 1
    }

    /// Stationary distribution `zeta_R` over windows.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Stationary first-position marginal `pi_R`.
    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    /// One step of the state distribution: `P^T phi`.
    pub fn evolve(&self, phi: &[f64]) -> Vec<f64> {
        self.transition.left_mul(phi)
    }

    /// Distribution of the next batch's leader: `Q^T phi`.
    pub fn observe(&self, phi: &[f64]) -> Vec<f64> {
        self.observation.left_mul(phi)
    }
}

/// Mixed-radix rank of a sequence of distinct clients among all sequences of
/// the same length, in lexicographic order.
fn rank(seq: &[usize], n: usize) -> usize {
    let mut r = 0usize;
    for (k, &x) in seq.iter().enumerate() {
        let smaller_used = seq[..k].iter().filter(|&&y| y < x).count();
        r = r * (n - k) + (x - smaller_used);
    }
    r
}

fn enumerate_windows(n: usize, len: usize, out: &mut Vec<u16>) {
    fn rec(n: usize, len: usize, used: &mut [bool], cur: &mut Vec<u16>, out: &mut Vec<u16>) {
        if cur.len() == len {
            out.extend_from_slice(cur);
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                cur.push(c as u16);
                rec(n, len, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    rec(n, len, &mut vec![false; n], &mut Vec::with_capacity(len), out);
}

/// Visits every ordered `b`-batch of `pool` in lexicographic order.
fn for_each_ordered_batch(pool: &[usize], b: usize, mut f: impl FnMut(&[usize])) {
    fn rec(pool: &[usize], b: usize, used: &mut [bool], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == b {
            f(cur);
            return;
        }
        for (k, &c) in pool.iter().enumerate() {
            if !used[k] {
                used[k] = true;
                cur.push(c);
                rec(pool, b, used, cur, f);
                cur.pop();
                used[k] = false;
            }
        }
    }
    rec(
        pool,
        b,
        &mut vec![false; pool.len()],
        &mut Vec::with_capacity(b),
        &mut f,
    );
}

/// First-position marginal of one memoryless draw from `pool`:
/// `Pr[lead = j] = (p_j + (B-1)(p_pool - p_j)/(A-1)) / (B p_pool)`.
pub(crate) fn one_round_leader_marginal(p: &[f64], pool: &[usize], b: usize) -> Vec<(usize, f64)> {
    let a = pool.len();
    let mass: f64 = pool.iter().map(|&i| p[i]).sum();
    pool.iter()
        .map(|&j| {
            let spread = if a > 1 {
                (b as f64 - 1.0) * (mass - p[j]) / (a as f64 - 1.0)
            } else {
                0.0
            };
            (j, (p[j] + spread) / (b as f64 * mass))
        })
        .collect()
}

/// Enumerates the augmented chain for `(profile, config)` and solves for its
/// stationary and marginal distributions.
///
/// `R = 0` yields the single-state chain whose observation row is the
/// memoryless one-round leader distribution. For `R = M - 1` the chain is
/// periodic and the stationary vector is the Cesàro limit.
pub fn enumerate_exact_chain(
    profile: &AvailabilityProfile,
    config: &ChainConfig,
    opts: &ExactOptions,
) -> Result<ExactChain> {
    let n = config.n_clients();
    if profile.len() != n {
        return Err(Error::validation("profile length does not match n_clients"));
    }
    let d = config
        .state_count()
        .filter(|&d| d <= opts.max_states && d <= u32::MAX as u128)
        .ok_or_else(|| {
            let size = config
                .state_count()
                .map_or_else(|| "more than 2^128".to_string(), |d| d.to_string());
            Error::feasibility(format!(
                "exact chain needs d(M,R) = {size} states, cap is {}",
                opts.max_states
            ))
        })? as usize;
    if n > u16::MAX as usize {
        return Err(Error::feasibility("exact enumeration supports at most 65535 clients"));
    }
    let b = config.batch_size();
    let r = config.min_separation();
    let len = r * b;
    let a = n - len;
    let row_nnz = if r == 0 {
        1
    } else {
        super::falling_factorial(a as u128, b as u128).unwrap_or(u128::MAX)
    };
    if row_nnz.saturating_mul(d as u128) > opts.max_nonzeros {
        return Err(Error::feasibility(format!(
            "exact chain needs {} transition entries, cap is {}",
            row_nnz.saturating_mul(d as u128),
            opts.max_nonzeros
        )));
    }

    let mut states = Vec::with_capacity(d * len);
    enumerate_windows(n, len, &mut states);
    debug_assert_eq!(states.len(), d * len);

    let p = profile.probs();
    let (trans_rows, obs_rows): (Vec<_>, Vec<_>) = (0..d)
        .into_par_iter()
        .map(|s| {
            let window: Vec<usize> = states[s * len..(s + 1) * len].iter().map(|&x| x as usize).collect();
            let mut blocked = vec![false; n];
            window.iter().for_each(|&c| blocked[c] = true);
            let pool: Vec<usize> = (0..n).filter(|&c| !blocked[c]).collect();
            if r == 0 {
                let q = one_round_leader_marginal(p, &pool, b);
                let q = q.into_iter().map(|(j, v)| (j as u32, v)).collect();
                return (vec![(0u32, 1.0)], q);
            }
            let mut next = Vec::new();
            let mut lead = vec![0.0; n];
            let mut total = 0.0;
            let mut seq = Vec::with_capacity(len);
            for_each_ordered_batch(&pool, b, |batch| {
                let w: f64 = batch.iter().map(|&c| p[c]).sum();
                seq.clear();
                seq.extend_from_slice(batch);
                seq.extend_from_slice(&window[..len - b]);
                next.push((rank(&seq, n) as u32, w));
                lead[batch[0]] += w;
                total += w;
            });
            next.iter_mut().for_each(|e| e.1 /= total);
            let q = pool.iter().map(|&j| (j as u32, lead[j] / total)).collect();
            (next, q)
        })
        .unzip();

    let transition = SparseMatrix::from_rows(trans_rows, d);
    let observation = SparseMatrix::from_rows(obs_rows, n);
    let mut chain = ExactChain {
        config: *config,
        profile: profile.clone(),
        window_len: len,
        states,
        transition,
        observation,
        period: 1,
        stationary: Vec::new(),
        marginal: Vec::new(),
    };
    chain.period = mixing::chain_period(&chain);
    chain.stationary = stationary_distribution(&chain, opts.tol, opts.max_iters)?;
    chain.marginal = marginal_participation(&chain);
    Ok(chain)
}

/// Solves `zeta^T P = zeta^T` by power iteration from the uniform vector.
///
/// For a periodic chain the iterate is replaced by the average of the last
/// `period` iterates, which converges to the Perron vector.
pub fn stationary_distribution(chain: &ExactChain, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let d = chain.n_states();
    let p = &chain.transition;
    let period = chain.period.max(1);
    let mut cur = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];

    // Cesàro window of the last `period` iterates and their running sum.
    let mut window: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::new();
    let mut sum = vec![0.0; d];
    let mut residual = f64::INFINITY;
    let mut candidate = vec![0.0; d];
    let mut image = vec![0.0; d];

    for _ in 0..max_iters {
        if period == 1 {
            p.left_mul_into(&cur, &mut next);
            normalize(&mut next);
            residual = l1_distance(&next, &cur);
            std::mem::swap(&mut cur, &mut next);
            if residual <= tol {
                return Ok(cur);
            }
            continue;
        }
        window.push_back(cur.clone());
        sum.iter_mut().zip(&cur).for_each(|(s, c)| *s += c);
        if window.len() > period {
            let old = window.pop_front().expect("window non-empty");
            sum.iter_mut().zip(&old).for_each(|(s, o)| *s -= o);
        }
        if window.len() == period {
            candidate.iter_mut().zip(&sum).for_each(|(c, s)| *c = s / period as f64);
            normalize(&mut candidate);
            p.left_mul_into(&candidate, &mut image);
            residual = l1_distance(&image, &candidate);
            if residual <= tol {
                return Ok(candidate);
            }
        }
        p.left_mul_into(&cur, &mut next);
        normalize(&mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Err(Error::Numerical {
        message: format!("stationary solve did not converge in {max_iters} iterations"),
        residual,
    })
}

/// `pi_R^T = zeta_R^T Q_R`.
pub fn marginal_participation(chain: &ExactChain) -> Vec<f64> {
    chain.observe(&chain.stationary)
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

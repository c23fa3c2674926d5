//! Convergence diagnostics for an [`ExactChain`].

use rayon::prelude::*;

use super::exact::{l1_distance, ExactChain};
use crate::error::{Error, Result};

/// Default work budget for [`tv_decay`], measured as `k_max * d^2`.
pub const TV_WORK_BUDGET: f64 = 1e11;

/// Largest step count [`mixing_time`] will scan.
pub const MIXING_SCAN_CAP: usize = 100_000;

/// `|| pi - (1/N) 1 ||_1`.
pub fn distance_to_uniform(pi: &[f64]) -> f64 {
    let u = 1.0 / pi.len() as f64;
    pi.iter().map(|x| (x - u).abs()).sum()
}

/// `d_TV(P^k, 1 zeta^T)` for `k = 0..=k_max`, i.e. the worst case over
/// starting states of half the L1 distance between `P^k(x, .)` and `zeta`.
pub fn tv_decay(chain: &ExactChain, k_max: usize) -> Result<Vec<f64>> {
    tv_decay_with_budget(chain, k_max, TV_WORK_BUDGET)
}

pub fn tv_decay_with_budget(chain: &ExactChain, k_max: usize, budget: f64) -> Result<Vec<f64>> {
    let d = chain.n_states();
    let work = (k_max as f64 + 1.0) * (d as f64) * (d as f64);
    if work > budget {
        return Err(Error::feasibility(format!(
            "tv_decay needs k_max * d^2 = {work:e} operations on {d} states, budget is {budget:e}"
        )));
    }
    let zeta = chain.stationary();
    let p = chain.transition();
    let per_start: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|x| {
            let mut row = vec![0.0; d];
            row[x] = 1.0;
            let mut next = vec![0.0; d];
            let mut out = Vec::with_capacity(k_max + 1);
            out.push(0.5 * l1_distance(&row, zeta));
            for _ in 0..k_max {
                p.left_mul_into(&row, &mut next);
                std::mem::swap(&mut row, &mut next);
                out.push(0.5 * l1_distance(&row, zeta));
            }
            out
        })
        .collect();
    Ok((0..=k_max)
        .map(|k| per_start.iter().map(|s| s[k]).fold(0.0, f64::max))
        .collect())
}

/// `t_mix(eps) = min { k >= 1 : d_TV(P^k, 1 zeta^T) <= eps }`.
pub fn mixing_time(chain: &ExactChain, eps: f64) -> Result<usize> {
    if !chain.is_aperiodic() {
        return Err(Error::Domain(format!(
            "mixing time is undefined for a chain of period {}",
            chain.period()
        )));
    }
    let mut k_max = 16;
    loop {
        let decay = tv_decay(chain, k_max)?;
        if let Some(k) = (1..=k_max).find(|&k| decay[k] <= eps) {
            return Ok(k);
        }
        if k_max >= MIXING_SCAN_CAP {
            return Err(Error::feasibility(format!(
                "d_TV stayed above {eps} for {MIXING_SCAN_CAP} steps"
            )));
        }
        k_max = (k_max * 2).min(MIXING_SCAN_CAP);
    }
}

/// `tau_mix = t_mix(1/4)`.
pub fn tau_mix(chain: &ExactChain) -> Result<usize> {
    mixing_time(chain, 0.25)
}

/// Period of the class containing state 0: the gcd of
/// `level(u) + 1 - level(v)` over edges `u -> v`, with BFS levels from state 0.
pub fn chain_period(chain: &ExactChain) -> usize {
    let d = chain.n_states();
    let p = chain.transition();
    let mut level = vec![usize::MAX; d];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for (v, w) in p.row(u) {
            if w <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Column sums `b` of `P_R`; every entry is 1 exactly when `P_R` is doubly stochastic.
pub fn column_sums(chain: &ExactChain) -> Vec<f64> {
    chain.transition().column_sums()
}

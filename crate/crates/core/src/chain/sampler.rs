//! Exact simulation of the participation chain.
//!
//! A draw picks a leader with probability `p_i / sum_{avail} p`, then `B - 1`
//! companions uniformly without replacement from the other available
//! clients, then shuffles the batch. Summing over which member led, a set `S`
//! comes out with probability `sum_{i in S} p_i / (p(avail) * C(A-1, B-1))`,
//! which is the sum-proportional rule. Cost per round is `O(B log N)`.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{ChainConfig, HistoryWindow, OrderedBatch};
use crate::error::{Error, Result};
use crate::profile::AvailabilityProfile;
use crate::rng::SimRng;

const REBUILD_EVERY: u64 = 4096;

/// Binary indexed tree over client weights, used for leader selection.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<f64>,
    leaf: Vec<f64>,
}

impl Fenwick {
    fn from_weights(w: &[f64]) -> Self {
        let n = w.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &v) in w.iter().enumerate() {
            tree[i + 1] += v;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        Self { tree, leaf: w.to_vec() }
    }

    fn set(&mut self, i: usize, v: f64) {
        let delta = v - self.leaf[i];
        self.leaf[i] = v;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut k = self.tree.len() - 1;
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Smallest index whose prefix sum exceeds `u`.
    fn search(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }

    fn rebuild(&mut self) {
        *self = Fenwick::from_weights(&self.leaf);
    }
}

/// Live sampler: configuration, profile, history window, generator and round counter.
#[derive(Debug, Clone)]
pub struct ChainState {
    config: ChainConfig,
    profile: AvailabilityProfile,
    history: HistoryWindow,
    rng: SimRng,
    round: u64,
    weights: Fenwick,
    // Available clients, with `slot[c]` the position of client `c` in `avail`
    // (or usize::MAX when unavailable).
    avail: Vec<usize>,
    slot: Vec<usize>,
}

impl ChainState {
    /// Fresh chain at round 0 with an empty history.
    pub fn new(profile: AvailabilityProfile, config: ChainConfig, rng: SimRng) -> Result<Self> {
        Self::with_history(profile, config, HistoryWindow::new(), rng)
    }

    /// Chain positioned after `history` (newest first); the round counter is
    /// set to the history length.
    pub fn with_history(
        profile: AvailabilityProfile,
        config: ChainConfig,
        history: HistoryWindow,
        rng: SimRng,
    ) -> Result<Self> {
        if profile.len() != config.n_clients() {
            return Err(Error::validation(format!(
                "profile has {} clients, config has {}",
                profile.len(),
                config.n_clients()
            )));
        }
        let n = config.n_clients();
        let blocked = {
            let mut v = vec![false; n];
            for c in history.flatten() {
                v[c] = true;
            }
            v
        };
        let w: Vec<f64> = (0..n).map(|i| if blocked[i] { 0.0 } else { profile.get(i) }).collect();
        let mut avail = Vec::with_capacity(n);
        let mut slot = vec![usize::MAX; n];
        for i in (0..n).filter(|&i| !blocked[i]) {
            slot[i] = avail.len();
            avail.push(i);
        }
        let round = history.len() as u64;
        let state = Self {
            config,
            profile,
            history,
            rng,
            round,
            weights: Fenwick::from_weights(&w),
            avail,
            slot,
        };
        Ok(state)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn profile(&self) -> &AvailabilityProfile {
        &self.profile
    }

    pub fn history(&self) -> &HistoryWindow {
        &self.history
    }

    /// Number of completed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Clients currently eligible, in internal order.
    pub fn available(&self) -> &[usize] {
        &self.avail
    }

    pub fn is_available(&self, client: usize) -> bool {
        self.slot[client] != usize::MAX
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Releases the generator, e.g. to reuse it for another chain.
    pub fn into_rng(self) -> SimRng {
        self.rng
    }

    /// Samples the next batch and advances the chain.
    pub fn next_batch(&mut self) -> Result<OrderedBatch> {
        let b = self.config.batch_size();
        let a = self.avail.len();
        if a < b {
            return Err(Error::validation(format!(
                "only {a} clients available for a batch of {b}"
            )));
        }
        let leader = self.draw_leader();
        // partial Fisher-Yates with the leader pinned to slot 0
        self.swap_slots(0, self.slot[leader]);
        for k in 1..b {
            let j = self.rng.random_range(k..a);
            self.swap_slots(k, j);
        }
        let mut members = self.avail[..b].to_vec();
        members.shuffle(&mut self.rng);

        for &c in &members {
            self.remove_available(c);
        }
        let batch = OrderedBatch::from_unchecked(members);
        if let Some(released) = self.history.push(batch.clone(), self.config.min_separation()) {
            for &c in released.members() {
                self.add_available(c);
            }
        }
        self.round += 1;
        if self.round.is_multiple_of(REBUILD_EVERY) {
            self.weights.rebuild();
        }
        Ok(batch)
    }

    fn draw_leader(&mut self) -> usize {
        let total = self.weights.total();
        let u = self.rng.random::<f64>() * total;
        let c = self.weights.search(u);
        if self.is_available(c) {
            return c;
        }
        // Accumulated rounding in the tree pointed at a blocked client.
        let mut acc = 0.0;
        let t: f64 = self.avail.iter().map(|&i| self.profile.get(i)).sum();
        let u = u / total * t;
        for &i in &self.avail {
            acc += self.profile.get(i);
            if u < acc {
                return i;
            }
        }
        *self.avail.last().expect("non-empty availability")
    }

    fn swap_slots(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        self.avail.swap(i, j);
        self.slot[self.avail[i]] = i;
        self.slot[self.avail[j]] = j;
    }

    fn remove_available(&mut self, c: usize) {
        let s = self.slot[c];
        let last = self.avail.len() - 1;
        self.swap_slots(s, last);
        self.avail.pop();
        self.slot[c] = usize::MAX;
        self.weights.set(c, 0.0);
    }

    fn add_available(&mut self, c: usize) {
        self.slot[c] = self.avail.len();
        self.avail.push(c);
        self.weights.set(c, self.profile.get(c));
    }
}

/// Draws the next ordered batch from `state`, advancing it.
pub fn sample_next_batch(state: &mut ChainState) -> Result<OrderedBatch> {
    state.next_batch()
}

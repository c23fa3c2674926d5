use std::sync::Arc;

use super::{LocalObjective, Problem};
use crate::error::{Error, Result};
use crate::profile::AvailabilityProfile;

/// Partition of clients into equal-size groups, plus group availabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMap {
    groups: Vec<Vec<usize>>,
    availability: AvailabilityProfile,
}

impl GroupMap {
    pub fn new(groups: Vec<Vec<usize>>, availability: AvailabilityProfile, n_clients: usize) -> Result<Self> {
        if groups.is_empty() || availability.len() != groups.len() {
            return Err(Error::validation("group availability must have one entry per group"));
        }
        let size = groups[0].len();
        if size == 0 || groups.iter().any(|g| g.len() != size) {
            return Err(Error::validation("groups must be non-empty and of equal size"));
        }
        let mut seen = vec![false; n_clients];
        for &c in groups.iter().flatten() {
            if c >= n_clients || std::mem::replace(&mut seen[c], true) {
                return Err(Error::validation(format!(
                    "client {c} is out of range or in two groups"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("groups do not cover every client"));
        }
        Ok(Self { groups, availability })
    }

    /// Consecutive blocks: group `g` holds clients `g*N/M .. (g+1)*N/M`.
    pub fn contiguous(n_clients: usize, availability: AvailabilityProfile) -> Result<Self> {
        let m = availability.len();
        if m == 0 || !n_clients.is_multiple_of(m) {
            return Err(Error::validation(format!(
                "{m} groups do not divide {n_clients} clients"
            )));
        }
        let size = n_clients / m;
        let groups = (0..m).map(|g| (g * size..(g + 1) * size).collect()).collect();
        Self::new(groups, availability, n_clients)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn availability(&self) -> &AvailabilityProfile {
        &self.availability
    }
}

/// Mean of the member objectives.
#[derive(Debug)]
struct GroupObjective {
    members: Vec<Arc<dyn LocalObjective>>,
}

impl LocalObjective for GroupObjective {
    fn dim(&self) -> usize {
        self.members[0].dim()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        self.members.iter().map(|m| m.loss(x)).sum::<f64>() / self.members.len() as f64
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        self.members[0].grad(x, out);
        let mut g = vec![0.0; out.len()];
        for m in &self.members[1..] {
            m.grad(x, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        }
        let k = self.members.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
}

/// Collapses each group into one super-client whose loss is the mean of its
/// members' losses.
pub fn group_problem(base: &Problem, map: &GroupMap) -> Result<Problem> {
    let n = base.n_clients();
    if map.groups().iter().flatten().any(|&c| c >= n) || map.groups().iter().map(Vec::len).sum::<usize>() != n {
        return Err(Error::validation("group map does not partition the problem's clients"));
    }
    let clients = map
        .groups()
        .iter()
        .map(|g| {
            Arc::new(GroupObjective {
                members: g.iter().map(|&c| base.client(c).clone()).collect(),
            }) as Arc<dyn LocalObjective>
        })
        .collect();
    let mut p = Problem::new(format!("{}_grouped{}", base.name(), map.n_groups()), clients)?;
    if let Some(x) = base.optimum_hint() {
        p = p.with_optimum_hint(x.to_vec());
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{generate_synthetic, SyntheticSpec};

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_clients: 12,
            samples_per_client: 10,
            seed: 9,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn singleton_groups_are_identical() {
        let base = generate_synthetic(&spec()).unwrap();
        let map = GroupMap::contiguous(12, AvailabilityProfile::uniform(12).unwrap()).unwrap();
        let g = group_problem(&base, &map).unwrap();
        let x: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        assert_eq!(base.metrics(&x), g.metrics(&x));
    }

    #[test]
    fn super_gradient_is_member_mean() {
        let base = generate_synthetic(&spec()).unwrap();
        let map = GroupMap::contiguous(12, AvailabilityProfile::power_law(3, 1.5).unwrap()).unwrap();
        let g = group_problem(&base, &map).unwrap();
        assert_eq!(g.n_clients(), 3);
        let x = vec![0.05; 20];
        for (gi, members) in map.groups().iter().enumerate() {
            let mut direct = vec![0.0; 20];
            let mut tmp = vec![0.0; 20];
            for &c in members {
                base.client(c).grad(&x, &mut tmp);
                direct.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b / 4.0);
            }
            let mut got = vec![0.0; 20];
            g.client(gi).grad(&x, &mut got);
            for (a, b) in got.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!((g.metrics(&x).loss - base.metrics(&x).loss).abs() < 1e-12);
    }

    #[test]
    fn hundred_clients_in_twenty_groups() {
        let map = GroupMap::contiguous(100, AvailabilityProfile::power_law(20, 1.5).unwrap()).unwrap();
        assert_eq!(map.n_groups(), 20);
        assert!(map.groups().iter().all(|g| g.len() == 5));
    }

    #[test]
    fn rejects_non_partitions() {
        let u = |m| AvailabilityProfile::uniform(m).unwrap();
        assert!(GroupMap::new(vec![vec![0, 1], vec![1, 2]], u(2), 4).is_err());
        assert!(GroupMap::new(vec![vec![0, 1], vec![2]], u(2), 3).is_err());
        assert!(GroupMap::new(vec![vec![0], vec![1]], u(2), 3).is_err());
        assert!(GroupMap::contiguous(10, u(3)).is_err());
    }
}

//! Brute-force enumeration of the batch sampling rule.

#![allow(dead_code)]

pub fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in pool.iter().enumerate() {
        for mut rest in combinations(&pool[i + 1..], k - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Every ordered batch reachable from `window`, with its probability:
/// unordered set weight proportional to its summed availability, then a
/// uniformly random order.
pub fn successors(window: &[usize], p: &[f64], b: usize) -> Vec<(Vec<usize>, f64)> {
    let pool: Vec<usize> = (0..p.len()).filter(|c| !window.contains(c)).collect();
    let sets = combinations(&pool, b);
    let total: f64 = sets.iter().map(|s| s.iter().map(|&i| p[i]).sum::<f64>()).sum();
    let mut out = Vec::new();
    for s in sets {
        let w = s.iter().map(|&i| p[i]).sum::<f64>() / total;
        let perms = permutations(&s);
        let k = perms.len() as f64;
        for perm in perms {
            out.push((perm, w / k));
        }
    }
    out
}

/// Total variation distance between two distributions on the same support.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

use fedsep_core::{
    generate_synthetic, group_problem, quadratic_toy, rng, AvailabilityProfile, GroupMap, LocalObjective, Problem,
    SyntheticSpec,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn central_difference(f: &dyn LocalObjective, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let up = f.loss(&y);
            y[j] = x[j] - h;
            let down = f.loss(&y);
            y[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

fn check(problem: &Problem, scale: f64, seed: u64) {
    let mut rng = rng::from_seed(seed);
    let mut g = vec![0.0; problem.dim()];
    for point in 0..10 {
        let x: Vec<f64> = (0..problem.dim())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (i, client) in problem.clients().iter().enumerate() {
            client.grad(&x, &mut g);
            let fd = central_difference(client.as_ref(), &x, 1e-6);
            let e = rel_error(&g, &fd);
            assert!(e < 1e-5, "{} client {i} point {point}: {e}", problem.name());
        }
    }
}

#[test]
fn quadratic_gradients() {
    check(&quadratic_toy(), 3.0, 1);
}

#[test]
fn synthetic_gradients() {
    let spec = SyntheticSpec {
        n_clients: 10,
        ..SyntheticSpec::default()
    };
    check(&generate_synthetic(&spec).unwrap(), 1.0, 2);
}

#[test]
fn grouped_gradients() {
    let spec = SyntheticSpec {
        n_clients: 12,
        ..SyntheticSpec::default()
    };
    let base = generate_synthetic(&spec).unwrap();
    let map = GroupMap::contiguous(12, AvailabilityProfile::power_law(4, 1.5).unwrap()).unwrap();
    check(&group_problem(&base, &map).unwrap(), 1.0, 3);
}

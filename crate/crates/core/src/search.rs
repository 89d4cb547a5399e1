//! Seeded maximization of scale-invariant ratios over `R^n`.

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

#[derive(Clone, Copy, Debug)]
pub(crate) struct SearchBudget {
    pub samples: usize,
    pub climbs: usize,
    pub steps: usize,
    pub seed: u64,
}

fn rescale(v: DVector<f64>) -> DVector<f64> {
    let m = v.amax();
    if m > 0.0 {
        v / m
    } else {
        v
    }
}

/// Best value of `f` found by Gaussian sampling followed by random-direction
/// hill climbing from the `climbs` best samples. `extra` starts are always
/// tried first. `f` must be invariant under positive scaling.
pub(crate) fn maximize<F>(n: usize, f: F, extra: &[DVector<f64>], b: SearchBudget) -> (f64, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut r = rng::rng(b.seed);
    let mut pool: Vec<(f64, DVector<f64>)> = extra.iter().map(|x| (f(x), rescale(x.clone()))).collect();
    for _ in 0..b.samples {
        let x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
        pool.push((f(&x), rescale(x)));
    }
    pool.sort_by(|a, c| c.0.total_cmp(&a.0));
    pool.truncate(b.climbs.max(1));

    let mut best = (f64::NEG_INFINITY, DVector::zeros(n));
    for (mut v, mut x) in pool {
        let mut step = 0.5;
        for _ in 0..b.steps {
            let d: DVector<f64> = if r.random::<bool>() {
                let i = r.random_range(0..n);
                let mut e = DVector::zeros(n);
                e[i] = if r.random::<bool>() { 1.0 } else { -1.0 };
                e
            } else {
                DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r))
            };
            let cand = rescale(&x + d * step);
            let cv = f(&cand);
            if cv > v {
                v = cv;
                x = cand;
            } else {
                step *= 0.9;
                if step < 1e-9 {
                    break;
                }
            }
        }
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

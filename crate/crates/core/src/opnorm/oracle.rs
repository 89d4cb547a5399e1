//! Ground-truth induced norms for small domains, by exhaustive search.
//!
//! The search shares nothing with [`op_norm`](super::op_norm): it samples the
//! ratio `‖Ax‖/‖x‖` on a grid over the surface of the cube `[-1, 1]^n` (every
//! ray from the origin crosses it) and polishes the best grid points with a
//! compass search. Meant for tests.

use nalgebra::DVector;

use super::Operator;
use crate::{Error, Result};

pub const MAX_ORACLE_DIM: usize = 4;

const POLISH_SEEDS: usize = 8;
const MIN_STEP: f64 = 1e-11;

fn ratio(a: &Operator, x: &[f64]) -> f64 {
    let nx = a.domain.norm_of(x);
    if nx == 0.0 {
        return 0.0;
    }
    let y = &a.matrix * DVector::from_column_slice(x);
    a.codomain.norm_of(y.as_slice()) / nx
}

/// Cube-surface points with `density` samples per free axis (forced odd so
/// face centers and midpoints are on the grid).
fn cube_surface(n: usize, density: usize) -> Vec<Vec<f64>> {
    let g = if density % 2 == 0 { density + 1 } else { density.max(3) };
    let ticks: Vec<f64> = (0..g).map(|k| -1.0 + 2.0 * k as f64 / (g - 1) as f64).collect();
    let mut out = Vec::new();
    for face in 0..n {
        for sign in [1.0, -1.0] {
            let free = n - 1;
            let total = g.pow(free as u32);
            for idx in 0..total {
                let mut x = vec![0.0; n];
                let mut rem = idx;
                let mut slot = 0;
                for (i, xi) in x.iter_mut().enumerate() {
                    if i == face {
                        *xi = sign;
                    } else {
                        *xi = ticks[rem % g];
                        rem /= g;
                        slot += 1;
                    }
                }
                debug_assert_eq!(slot, free);
                out.push(x);
            }
        }
    }
    out
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; n];
                d[i] = si;
                d[j] = sj;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn polish(a: &Operator, mut x: Vec<f64>, mut step: f64, dirs: &[Vec<f64>]) -> f64 {
    let mut val = ratio(a, &x);
    while step > MIN_STEP {
        let mut improved = false;
        for d in dirs {
            let cand: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + step * b).collect();
            let scale = cand.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                continue;
            }
            let cand: Vec<f64> = cand.iter().map(|v| v / scale).collect();
            let v = ratio(a, &cand);
            if v > val {
                val = v;
                x = cand;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    val
}

/// Induced norm of `a` by grid search plus polish. Domain dimension must be
/// at most [`MAX_ORACLE_DIM`].
pub fn op_norm_oracle(a: &Operator, grid_density: usize) -> Result<f64> {
    let n = a.domain.dim();
    if n > MAX_ORACLE_DIM {
        return Err(Error::DimensionTooLarge { dim: n, max: MAX_ORACLE_DIM });
    }
    if n == 1 {
        return Ok(ratio(a, &[1.0]));
    }
    let pts = cube_surface(n, grid_density);
    let mut scored: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, x)| (ratio(a, x), i)).collect();
    scored.sort_by(|l, r| r.0.total_cmp(&l.0).then(l.1.cmp(&r.1)));
    let dirs = directions(n);
    let step = 2.0 / grid_density.max(2) as f64;
    let best = scored
        .iter()
        .take(POLISH_SEEDS)
        .map(|&(_, i)| polish(a, pts[i].clone(), step, &dirs))
        .fold(scored[0].0, f64::max);
    Ok(best)
}

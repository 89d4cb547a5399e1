//! Finite nets in unit balls, standing in for the countable dense subsets
//! that BCP-point constructions draw from.

use nalgebra::DVector;
use rand::Rng as _;

use super::SpaceSpec;
use crate::rng;
use crate::{Error, Result};

const NET_SEED: u64 = 0x6e65_7473;

/// Something that returns a nearby point of the unit ball.
pub trait FactorNet: Sync {
    fn space(&self) -> &SpaceSpec;

    /// Closest available point to `v` and its distance in the space norm.
    fn nearest(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)>;

    /// Distance within which every point of the unit ball has a net point,
    /// if known a priori.
    fn covering_radius(&self) -> Option<f64>;
}

/// An explicit finite point set in the closed unit ball.
#[derive(Clone, Debug)]
pub struct UnitNet {
    pub space: SpaceSpec,
    pub eta: f64,
    /// Grid step actually used (largest dyadic `2^-j ≤ η`).
    pub step: f64,
    pub points: Vec<DVector<f64>>,
    pub cap: usize,
    /// True when `points` is the full dyadic grid inside the ball.
    pub exhaustive: bool,
}

fn dyadic_step(eta: f64) -> f64 {
    let mut h = 1.0;
    while h > eta {
        h /= 2.0;
    }
    h
}

/// Dyadic grid of step `≤ η` inside the unit ball, or a seeded random net of
/// `cap` points (with `exhaustive = false`) when the grid has more than `cap`
/// points.
pub fn unit_net(s: &SpaceSpec, eta: f64, cap: usize) -> Result<UnitNet> {
    unit_net_seeded(s, eta, cap, NET_SEED)
}

pub fn unit_net_seeded(s: &SpaceSpec, eta: f64, cap: usize, seed: u64) -> Result<UnitNet> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("net resolution {eta} must be positive")));
    }
    if cap == 0 {
        return Err(Error::InvalidParameter("net cap must be positive".into()));
    }
    let step = dyadic_step(eta);
    let n = s.dim();
    let ranges: Vec<i64> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            ((1.0 / s.norm_of(&e)) / step + 1e-9).floor() as i64
        })
        .collect();

    let mut points = Vec::new();
    let mut current = vec![0.0; n];
    let complete = grid_dfs(s, step, &ranges, 0, &mut current, &mut points, cap);
    if complete {
        return Ok(UnitNet { space: s.clone(), eta, step, points, cap, exhaustive: true });
    }

    let mut r = rng::rng(seed);
    let dirs = s.sample_sphere(cap, rng::child(seed, 1));
    let points = dirs
        .into_iter()
        .map(|d| {
            let u: f64 = r.random();
            d * u.powf(1.0 / n as f64)
        })
        .collect();
    Ok(UnitNet { space: s.clone(), eta, step, points, cap, exhaustive: false })
}

/// Returns false once more than `cap` points were found.
fn grid_dfs(
    s: &SpaceSpec,
    step: f64,
    ranges: &[i64],
    depth: usize,
    current: &mut Vec<f64>,
    out: &mut Vec<DVector<f64>>,
    cap: usize,
) -> bool {
    if depth == ranges.len() {
        if out.len() >= cap {
            return false;
        }
        out.push(DVector::from_column_slice(current));
        return true;
    }
    let k = ranges[depth];
    for j in -k..=k {
        current[depth] = j as f64 * step;
        if s.norm_of(current) > 1.0 + 1e-12 {
            continue;
        }
        if !grid_dfs(s, step, ranges, depth + 1, current, out, cap) {
            current[depth] = 0.0;
            return false;
        }
    }
    current[depth] = 0.0;
    true
}

impl UnitNet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// An explicit net from given points; every point must lie in the ball.
    pub fn from_points(space: SpaceSpec, points: Vec<DVector<f64>>) -> Result<Self> {
        for p in &points {
            let n = space.norm(p.as_slice())?;
            if n > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!("net point of norm {n} outside the unit ball")));
            }
        }
        let cap = points.len().max(1);
        Ok(UnitNet { space, eta: f64::NAN, step: f64::NAN, points, cap, exhaustive: false })
    }
}

impl FactorNet for UnitNet {
    fn space(&self) -> &SpaceSpec {
        &self.space
    }

    fn nearest(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if v.len() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: v.len() });
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = self.space.norm_of((v - p).as_slice());
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        let (i, d) = best.ok_or_else(|| Error::InvalidParameter("empty net".into()))?;
        Ok((self.points[i].clone(), d))
    }

    /// Truncating a ball point toward zero onto the grid moves every
    /// coordinate by less than one step; monotone norms bound the move by
    /// `step · ‖(1,…,1)‖`.
    fn covering_radius(&self) -> Option<f64> {
        self.exhaustive.then(|| self.step * self.space.ones_norm())
    }
}

/// The full dyadic lattice `step·Z^n` intersected with the unit ball, never
/// enumerated: lookups truncate coordinates toward zero.
#[derive(Clone, Debug)]
pub struct DyadicLattice {
    pub space: SpaceSpec,
    pub step: f64,
}

impl DyadicLattice {
    pub fn new(space: SpaceSpec, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("lattice step {step} must be positive")));
        }
        Ok(DyadicLattice { space, step })
    }

    /// Finest-needed lattice whose covering radius is at most `radius`.
    pub fn with_radius(space: SpaceSpec, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("lattice radius {radius} must be positive")));
        }
        let step = dyadic_step(radius / space.ones_norm());
        DyadicLattice::new(space, step)
    }
}

impl FactorNet for DyadicLattice {
    fn space(&self) -> &SpaceSpec {
        &self.space
    }

    fn nearest(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if v.len() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: v.len() });
        }
        let p = v.map(|x| (x / self.step).trunc() * self.step);
        let d = self.space.norm_of((v - &p).as_slice());
        Ok((p, d))
    }

    fn covering_radius(&self) -> Option<f64> {
        Some(self.step * self.space.ones_norm())
    }
}

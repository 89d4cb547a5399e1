//! Ball intersection feasibility: is `X ∩ ⋂_i B(y + x_i, ‖y − x_i‖ + ε)`
//! nonempty for a subspace `X` of a finite-dimensional `Z`? Also the
//! reflection defect `‖id − 2P‖` of a supplied projection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::opnorm::{op_norm, NormEstimate, OpNormOptions, Operator};
use crate::spaces::SpaceSpec;
use crate::{Error, Result};

/// Largest subspace dimension for the grid certificate.
pub const MAX_CERTIFY_DIM: usize = 3;
const MAX_GRID_POINTS: usize = 1 << 21;

#[derive(Clone, Debug, PartialEq)]
pub struct BipInstance {
    pub space: SpaceSpec,
    pub basis: Vec<DVector<f64>>,
    pub y: DVector<f64>,
    pub points: Vec<DVector<f64>>,
    /// Added to every `‖y − x_i‖`. Equal to `ε > 0` except in diagnostic
    /// instances, where any value (also negative) is allowed.
    pub slack: f64,
    b: DMatrix<f64>,
}

fn least_squares_residual(b: &DMatrix<f64>, v: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = b.clone().svd(true, true);
    let c = svd.solve(v, 1e-14).expect("svd computed with u and v");
    let r = (b * &c - v).norm();
    (c, r)
}

impl BipInstance {
    pub fn new(
        space: SpaceSpec,
        basis: Vec<DVector<f64>>,
        y: DVector<f64>,
        points: Vec<DVector<f64>>,
        eps: f64,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
        }
        Self::diagnostic(space, basis, y, points, eps)
    }

    /// Like [`BipInstance::new`] but with an arbitrary radius slack.
    pub fn diagnostic(
        space: SpaceSpec,
        basis: Vec<DVector<f64>>,
        y: DVector<f64>,
        points: Vec<DVector<f64>>,
        slack: f64,
    ) -> Result<Self> {
        space.validate()?;
        let d = space.dim();
        if basis.is_empty() {
            return Err(Error::InvalidParameter("subspace basis is empty".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidParameter("at least one point is required".into()));
        }
        for v in basis.iter().chain(&points).chain(std::iter::once(&y)) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        let b = DMatrix::from_columns(&basis);
        let (_, dist) = least_squares_residual(&b, &y);
        if dist <= 1e-9 {
            return Err(Error::TargetInSubspace { distance: dist });
        }
        for (i, p) in points.iter().enumerate() {
            let (_, r) = least_squares_residual(&b, p);
            if r > 1e-10 {
                return Err(Error::PointOutsideSubspace { index: i, residual: r });
            }
        }
        Ok(BipInstance { space, basis, y, points, slack, b })
    }

    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|p| self.space.norm_of((&self.y - p).as_slice()) + self.slack).collect()
    }

    fn centers(&self) -> Vec<DVector<f64>> {
        self.points.iter().map(|p| &self.y + p).collect()
    }

    /// `g(c) = max_i (‖Bc − (y + x_i)‖ − r_i)` and the active index.
    fn objective(&self, c: &DVector<f64>, centers: &[DVector<f64>], radii: &[f64]) -> (f64, usize) {
        let x = &self.b * c;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (z, r)) in centers.iter().zip(radii).enumerate() {
            let v = self.space.norm_of((&x - z).as_slice()) - r;
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Worst constraint violation at `x` (negative when strictly inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let radii = self.radii();
        self.centers()
            .iter()
            .zip(&radii)
            .map(|(z, r)| self.space.norm_of((x - z).as_slice()) - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every triple of points (condition with three points), as instances.
    pub fn triples(&self) -> Vec<BipInstance> {
        let n = self.points.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let mut t = self.clone();
                    t.points = vec![self.points[i].clone(), self.points[j].clone(), self.points[k].clone()];
                    out.push(t);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BipOutcome {
    Feasible {
        #[serde(serialize_with = "crate::opnorm::ser_vec")]
        witness: DVector<f64>,
        max_violation: f64,
        method: BipMethod,
    },
    Infeasible {
        /// Certified lower bound on `min g`.
        lower_bound: f64,
        best_value: f64,
    },
    Inconclusive {
        best_value: f64,
        lower_bound: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BipMethod {
    AlternatingProjections,
    Subgradient,
}

impl BipOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, BipOutcome::Feasible { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BipOptions {
    pub tol: f64,
    pub iters: usize,
}

impl Default for BipOptions {
    fn default() -> Self {
        BipOptions { tol: 1e-9, iters: 20_000 }
    }
}

fn is_plain_l2(s: &SpaceSpec) -> bool {
    matches!(s, SpaceSpec::Lp { p, .. } if p.is_two())
}

/// Cyclic projections onto the subspace and the Euclidean balls.
fn alternating_projections(inst: &BipInstance, iters: usize) -> DVector<f64> {
    let centers = inst.centers();
    let radii = inst.radii();
    let q = inst.b.clone().svd(true, false).u.expect("u computed");
    let rank = inst.basis.len();
    let q = q.columns(0, rank).into_owned();
    let project = |v: &DVector<f64>| &q * (q.transpose() * v);
    let mut x = DVector::zeros(inst.space.dim());
    for _ in 0..iters {
        let mut moved = 0.0f64;
        for (z, r) in centers.iter().zip(&radii) {
            let d = &x - z;
            let n = d.norm();
            if n > *r && *r >= 0.0 {
                let nx = z + d * (r / n);
                moved = moved.max((&nx - &x).norm());
                x = nx;
            }
        }
        let px = project(&x);
        moved = moved.max((&px - &x).norm());
        x = px;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

/// Subgradient descent with diminishing steps, then a compass polish.
fn subgradient_descent(inst: &BipInstance, iters: usize) -> (f64, DVector<f64>) {
    let centers = inst.centers();
    let radii = inst.radii();
    let k = inst.basis.len();
    let scale = radii.iter().cloned().fold(1.0, f64::max);
    let mut c = DVector::zeros(k);
    let mut best = (inst.objective(&c, &centers, &radii).0, c.clone());
    for it in 0..iters {
        let (_, i) = inst.objective(&c, &centers, &radii);
        let resid = &inst.b * &c - &centers[i];
        let g = inst.b.transpose() * inst.space.subgradient(resid.as_slice());
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        c -= g * (scale / (gn * ((it + 1) as f64).sqrt()));
        let v = inst.objective(&c, &centers, &radii).0;
        if v < best.0 {
            best = (v, c.clone());
        }
    }
    let (mut v, mut c) = best;
    let mut h = scale * 0.1;
    while h > 1e-13 {
        let mut improved = false;
        for j in 0..k {
            for s in [1.0, -1.0] {
                let mut cand = c.clone();
                cand[j] += s * h;
                let cv = inst.objective(&cand, &centers, &radii).0;
                if cv < v {
                    v = cv;
                    c = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    (v, c)
}

/// Lower bound on `min g` over the whole subspace from a grid on the box
/// holding every point with `g ≤ level`, or `None` when the subspace is too
/// large to grid. `level` must be at least the true minimum.
fn grid_lower_bound(inst: &BipInstance, level: f64) -> Option<f64> {
    let k = inst.basis.len();
    if k > MAX_CERTIFY_DIM {
        return None;
    }
    let centers = inst.centers();
    let radii = inst.radii();
    // ‖Bc‖ ≤ R whenever g(c) ≤ level
    let big_r = centers
        .iter()
        .zip(&radii)
        .map(|(z, r)| inst.space.norm_of(z.as_slice()) + r + level)
        .fold(f64::INFINITY, f64::min);
    if big_r < 0.0 {
        return Some(f64::INFINITY);
    }
    let sv = inst.b.clone().svd(false, false).singular_values;
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = smin * inst.space.l2_lower_constant();
    if !(kappa > 0.0) {
        return None;
    }
    let half = big_r / kappa;
    let lip: f64 = inst.basis.iter().map(|b| inst.space.norm_of(b.as_slice())).sum();
    let per_axis = ((MAX_GRID_POINTS as f64).powf(1.0 / k as f64).floor() as usize).max(2);
    let h = 2.0 * half / (per_axis - 1) as f64;
    let mut idx = vec![0usize; k];
    let mut grid_min = f64::INFINITY;
    loop {
        let c = DVector::from_fn(k, |j, _| -half + h * idx[j] as f64);
        grid_min = grid_min.min(inst.objective(&c, &centers, &radii).0);
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
    }
    Some(grid_min - lip * h / 2.0)
}

/// Searches for a point of the subspace inside every ball.
pub fn bip_feasible(inst: &BipInstance, o: &BipOptions) -> BipOutcome {
    if is_plain_l2(&inst.space) && inst.slack >= 0.0 {
        let x = alternating_projections(inst, o.iters);
        let v = inst.violation(&x);
        if v <= o.tol {
            return BipOutcome::Feasible { witness: x, max_violation: v, method: BipMethod::AlternatingProjections };
        }
    }
    let (v, c) = subgradient_descent(inst, o.iters);
    if v <= o.tol {
        let x = &inst.b * c;
        let max_violation = inst.violation(&x);
        return BipOutcome::Feasible { witness: x, max_violation, method: BipMethod::Subgradient };
    }
    match grid_lower_bound(inst, v) {
        Some(lb) if lb > o.tol => BipOutcome::Infeasible { lower_bound: lb, best_value: v },
        lb => BipOutcome::Inconclusive { best_value: v, lower_bound: lb },
    }
}

/// Runs every three-point sub-instance; feasible iff all are.
pub fn bip_three_point(inst: &BipInstance, o: &BipOptions) -> Vec<BipOutcome> {
    inst.triples().iter().map(|t| bip_feasible(t, o)).collect()
}

/// `‖id − 2P‖` for a projection `P`.
pub fn dual_reflection_defect(p: &Operator, opts: &OpNormOptions) -> Result<NormEstimate> {
    if p.domain != p.codomain {
        return Err(Error::SpaceMismatch("a projection maps a space to itself".into()));
    }
    let defect = (&p.matrix * &p.matrix - &p.matrix).amax();
    if defect > 1e-10 {
        return Err(Error::NotAProjection { defect });
    }
    let n = p.domain.dim();
    let r = p.with_matrix(DMatrix::identity(n, n) - &p.matrix * 2.0)?;
    Ok(op_norm(&r, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn three_points(slack: Option<f64>, eps: f64) -> BipInstance {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let pts = vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 0.0])];
        match slack {
            None => BipInstance::new(s, vec![v(&[1.0, 0.0])], v(&[0.0, 1.0]), pts, eps).unwrap(),
            Some(sl) => BipInstance::diagnostic(s, vec![v(&[1.0, 0.0])], v(&[0.0, 1.0]), pts, sl).unwrap(),
        }
    }

    /// Feasible `t` for `√((t∓1)² + 1) ≤ √2 + ε` and `√(t² + 1) ≤ 1 + ε`.
    fn interval(eps: f64) -> f64 {
        let a = ((2f64.sqrt() + eps).powi(2) - 1.0).sqrt() - 1.0;
        let b = ((1.0 + eps).powi(2) - 1.0).sqrt();
        a.min(b)
    }

    #[test]
    fn feasible_three_point_instance() {
        let inst = three_points(None, 0.01);
        let half = interval(0.01);
        assert_abs_diff_eq!(half, 0.0140928, epsilon = 1e-6);
        match bip_feasible(&inst, &BipOptions::default()) {
            BipOutcome::Feasible { witness, max_violation, .. } => {
                assert!(max_violation <= 1e-6);
                assert!(witness[1].abs() <= 1e-12);
                assert!(witness[0].abs() <= half + 1e-9);
            }
            other => panic!("{other:?}"),
        }
        assert!(inst.violation(&v(&[0.0, 0.0])) <= 0.0);
        assert!(inst.violation(&v(&[half + 1e-4, 0.0])) > 0.0);
    }

    #[test]
    fn subgradient_path_agrees() {
        let s = SpaceSpec::lp(1.5, 2).unwrap();
        let inst = BipInstance::new(
            s,
            vec![v(&[1.0, 0.0])],
            v(&[0.0, 1.0]),
            vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 0.0])],
            0.01,
        )
        .unwrap();
        let out = bip_feasible(&inst, &BipOptions::default());
        match out {
            BipOutcome::Feasible { max_violation, method, .. } => {
                assert_eq!(method, BipMethod::Subgradient);
                assert!(max_violation <= 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shrunk_radii_are_certified_infeasible() {
        let inst = three_points(Some(-0.5), 0.0);
        match bip_feasible(&inst, &BipOptions::default()) {
            BipOutcome::Infeasible { lower_bound, best_value } => {
                assert!(lower_bound > 0.0);
                assert!(lower_bound <= best_value);
                assert_abs_diff_eq!(best_value, 0.5, epsilon = 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn origin_only() {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let inst = BipInstance::new(s, vec![v(&[1.0, 0.0])], v(&[0.0, 1.0]), vec![v(&[0.0, 0.0])], 0.01).unwrap();
        match bip_feasible(&inst, &BipOptions::default()) {
            BipOutcome::Feasible { witness, .. } => assert!(witness.norm() <= 0.1),
            other => panic!("{other:?}"),
        }
        assert!(inst.violation(&v(&[0.0, 0.0])) <= 0.0);
    }

    #[test]
    fn monotone_in_eps() {
        for eps in [0.001, 0.01, 0.1, 1.0] {
            assert!(bip_feasible(&three_points(None, eps), &BipOptions::default()).is_feasible());
        }
    }

    #[test]
    fn three_point_form_matches() {
        let inst = three_points(None, 0.01);
        assert!(bip_three_point(&inst, &BipOptions::default()).iter().all(BipOutcome::is_feasible));
        let bad = three_points(Some(-0.5), 0.0);
        assert!(bip_three_point(&bad, &BipOptions::default()).iter().any(|o| !o.is_feasible()));
    }

    #[test]
    fn invalid_instances() {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        assert!(matches!(
            BipInstance::new(s.clone(), vec![v(&[1.0, 0.0])], v(&[2.0, 0.0]), vec![v(&[0.0, 0.0])], 0.01),
            Err(Error::TargetInSubspace { .. })
        ));
        assert!(matches!(
            BipInstance::new(s.clone(), vec![v(&[1.0, 0.0])], v(&[0.0, 1.0]), vec![v(&[0.0, 1.0])], 0.01),
            Err(Error::PointOutsideSubspace { index: 0, .. })
        ));
        assert!(BipInstance::new(s, vec![v(&[1.0, 0.0])], v(&[0.0, 1.0]), vec![v(&[0.0, 0.0])], 0.0).is_err());
    }

    #[test]
    fn reflection_defects() {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let opts = OpNormOptions::default();
        let orth = Operator::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]], s.clone(), s.clone()).unwrap();
        assert_abs_diff_eq!(dual_reflection_defect(&orth, &opts).unwrap().lower, 1.0, epsilon = 1e-12);
        let skew = Operator::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]], s.clone(), s.clone()).unwrap();
        assert_abs_diff_eq!(dual_reflection_defect(&skew, &opts).unwrap().lower, 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        let zero = Operator::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]], s.clone(), s.clone()).unwrap();
        assert_abs_diff_eq!(dual_reflection_defect(&zero, &opts).unwrap().lower, 1.0, epsilon = 1e-12);
        let not = Operator::from_rows(&[&[2.0, 0.0], &[0.0, 0.0]], s.clone(), s).unwrap();
        assert!(matches!(dual_reflection_defect(&not, &opts), Err(Error::NotAProjection { .. })));
    }
}

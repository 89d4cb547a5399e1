//! Induced operator norms between [`SpaceSpec`]s.
//!
//! [`op_norm`] picks a closed form when one exists and otherwise runs a
//! seeded multistart ascent on the domain sphere. Every estimate carries a
//! witness `x` with `‖Ax‖/‖x‖ = lower`, so lower bounds are always
//! replayable; only closed forms are marked `certified`.

pub mod oracle;

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::spaces::{Exponent, SpaceSpec};
use crate::{Error, Result};

/// Above this domain dimension the `∞→q` sign enumeration is skipped.
pub const MAX_SIGN_ENUM_DIM: usize = 20;

/// A dense `codomain.dim() × domain.dim()` matrix between two spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    pub matrix: DMatrix<f64>,
    pub domain: SpaceSpec,
    pub codomain: SpaceSpec,
}

impl Operator {
    pub fn new(matrix: DMatrix<f64>, domain: SpaceSpec, codomain: SpaceSpec) -> Result<Self> {
        if matrix.nrows() != codomain.dim() || matrix.ncols() != domain.dim() {
            return Err(Error::ShapeMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                cod_dim: codomain.dim(),
                dom_dim: domain.dim(),
            });
        }
        Ok(Operator { matrix, domain, codomain })
    }

    /// Row-major constructor.
    pub fn from_rows(rows: &[&[f64]], domain: SpaceSpec, codomain: SpaceSpec) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidParameter("ragged matrix rows".into()));
        }
        let m = DMatrix::from_fn(r, c, |i, j| rows[i][j]);
        Operator::new(m, domain, codomain)
    }

    pub fn identity(space: SpaceSpec) -> Self {
        let n = space.dim();
        Operator { matrix: DMatrix::identity(n, n), domain: space.clone(), codomain: space }
    }

    /// `f ⊗ y : x ↦ f(x) y`.
    pub fn rank_one(f: &DVector<f64>, y: &DVector<f64>, domain: SpaceSpec, codomain: SpaceSpec) -> Result<Self> {
        Operator::new(y * f.transpose(), domain, codomain)
    }

    /// Same spaces, new matrix.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        Operator::new(matrix, self.domain.clone(), self.codomain.clone())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Operator) -> Result<Self> {
        if inner.codomain != self.domain {
            return Err(Error::SpaceMismatch(format!(
                "cannot compose: inner codomain {} differs from outer domain {}",
                inner.codomain, self.domain
            )));
        }
        Ok(Operator {
            matrix: &self.matrix * &inner.matrix,
            domain: inner.domain.clone(),
            codomain: self.codomain.clone(),
        })
    }

    /// Adjoint between the dual spaces.
    pub fn transpose(&self) -> Self {
        Operator {
            matrix: self.matrix.transpose(),
            domain: self.codomain.dual(),
            codomain: self.domain.dual(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch { expected: self.domain.dim(), found: x.len() });
        }
        Ok(&self.matrix * x)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Operator { matrix: &self.matrix * c, domain: self.domain.clone(), codomain: self.codomain.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|v| *v == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Closed form (spectral, column or row formula).
    Exact,
    /// Enumeration of the extreme points of the domain ball.
    Brute,
    /// Multistart ascent; lower bound only.
    Multistart,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub lower: f64,
    #[serde(serialize_with = "ser_vec")]
    pub witness: DVector<f64>,
    pub upper: Option<f64>,
    pub method: Method,
    pub restarts: usize,
    pub certified: bool,
}

pub(crate) fn ser_vec<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

impl NormEstimate {
    fn exact(lower: f64, witness: DVector<f64>, method: Method) -> Self {
        NormEstimate { lower, witness, upper: Some(lower), method, restarts: 0, certified: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpNormOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        OpNormOptions { restarts: 32, tol: 1e-8, max_iter: 500, seed: 0x6f70_6e6f_726d }
    }
}

fn ratio(a: &Operator, x: &DVector<f64>) -> f64 {
    let nx = a.domain.norm_of(x.as_slice());
    if nx == 0.0 {
        return 0.0;
    }
    a.codomain.norm_of((&a.matrix * x).as_slice()) / nx
}

fn ell_one_like(s: &SpaceSpec) -> bool {
    match s {
        SpaceSpec::Lp { p, .. } | SpaceSpec::WeightedLp { p, .. } => p.is_one(),
        SpaceSpec::LpSum { .. } => false,
    }
}

fn ell_inf_like(s: &SpaceSpec) -> bool {
    match s {
        SpaceSpec::Lp { p, .. } | SpaceSpec::WeightedLp { p, .. } => p.is_infinite(),
        SpaceSpec::LpSum { .. } => false,
    }
}

fn unit_coordinate(s: &SpaceSpec, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(s.dim());
    e[j] = 1.0;
    let n = s.norm_of(e.as_slice());
    e / n
}

fn coordinate_weight(s: &SpaceSpec, i: usize) -> f64 {
    let mut e = vec![0.0; s.dim()];
    e[i] = 1.0;
    s.norm_of(&e)
}

/// Induced norm `sup ‖Ax‖_cod / ‖x‖_dom`.
///
/// Closed forms, in order of precedence: `2→2` (largest singular value),
/// `1→q` (best column), `p→∞` (best row in the dual norm), `∞→q` for domain
/// dimension ≤ [`MAX_SIGN_ENUM_DIM`] (sign vectors). Anything else is a
/// multistart lower bound.
pub fn op_norm(a: &Operator, opts: &OpNormOptions) -> NormEstimate {
    let (dom, cod) = (&a.domain, &a.codomain);
    let n = dom.dim();

    if dom.plain_exponent().is_some_and(Exponent::is_two) && cod.plain_exponent().is_some_and(Exponent::is_two) {
        return spectral(a);
    }

    if ell_one_like(dom) {
        let (best, j) = (0..n)
            .map(|j| (ratio(a, &unit_coordinate(dom, j)), j))
            .fold((f64::NEG_INFINITY, 0), |acc, c| if c.0 > acc.0 { c } else { acc });
        return NormEstimate::exact(best, unit_coordinate(dom, j), Method::Exact);
    }

    if ell_inf_like(cod) {
        let dual = dom.dual();
        let (mut best, mut row) = (f64::NEG_INFINITY, 0);
        for i in 0..cod.dim() {
            let r: Vec<f64> = a.matrix.row(i).iter().copied().collect();
            let v = coordinate_weight(cod, i) * dual.norm_of(&r);
            if v > best {
                best = v;
                row = i;
            }
        }
        let r: Vec<f64> = a.matrix.row(row).iter().copied().collect();
        let witness = dom.norming_vector(&r);
        return NormEstimate::exact(ratio(a, &witness), witness, Method::Exact);
    }

    if ell_inf_like(dom) && n <= MAX_SIGN_ENUM_DIM {
        return sign_vertices(a);
    }

    multistart(a, opts)
}

fn spectral(a: &Operator) -> NormEstimate {
    let m = &a.matrix;
    if m.iter().all(|v| *v == 0.0) {
        let w = unit_coordinate(&a.domain, 0);
        return NormEstimate::exact(0.0, w, Method::Exact);
    }
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if *s > acc.1 { (i, *s) } else { acc });
    let mut w: DVector<f64> = vt.row(k).transpose();
    w /= w.norm();
    NormEstimate::exact(ratio(a, &w), w, Method::Exact)
}

fn sign_vertices(a: &Operator) -> NormEstimate {
    let n = a.domain.dim();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / coordinate_weight(&a.domain, i)).collect();
    let mut best = (f64::NEG_INFINITY, 0u64);
    // θ_0 = +1 suffices by symmetry.
    for mask in 0..(1u64 << (n - 1)) {
        let x = DVector::from_fn(n, |i, _| {
            let neg = i > 0 && (mask >> (i - 1)) & 1 == 1;
            if neg { -scale[i] } else { scale[i] }
        });
        let v = a.codomain.norm_of((&a.matrix * &x).as_slice());
        if v > best.0 {
            best = (v, mask);
        }
    }
    let mask = best.1;
    let w = DVector::from_fn(n, |i, _| {
        let neg = i > 0 && (mask >> (i - 1)) & 1 == 1;
        if neg { -scale[i] } else { scale[i] }
    });
    NormEstimate { lower: ratio(a, &w), witness: w, upper: Some(best.0), method: Method::Brute, restarts: 0, certified: true }
}

/// Nonlinear power iteration from `start`: step to the domain vector normed
/// by `Aᵀφ`, with `φ` a subgradient of the codomain norm at `Ax`. The ratio is
/// nondecreasing along the iteration.
fn ascend(a: &Operator, start: DVector<f64>, opts: &OpNormOptions) -> (f64, DVector<f64>) {
    let mut x = start;
    let mut val = ratio(a, &x);
    for _ in 0..opts.max_iter {
        let y = &a.matrix * &x;
        if y.iter().all(|v| *v == 0.0) {
            break;
        }
        let phi = a.codomain.subgradient(y.as_slice());
        let g = a.matrix.transpose() * phi;
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        let next = a.domain.norming_vector(g.as_slice());
        let nv = ratio(a, &next);
        if nv > val {
            let done = nv <= val * (1.0 + opts.tol);
            x = next;
            val = nv;
            if done {
                break;
            }
        } else {
            break;
        }
    }
    (val, x)
}

fn multistart(a: &Operator, opts: &OpNormOptions) -> NormEstimate {
    let dom = &a.domain;
    let n = dom.dim();
    let restarts = opts.restarts.max(1);
    let first = (0..n)
        .map(|j| (ratio(a, &unit_coordinate(dom, j)), j))
        .fold((f64::NEG_INFINITY, 0), |acc, c| if c.0 > acc.0 { c } else { acc })
        .1;
    let start = |i: usize| -> DVector<f64> {
        if i == 0 {
            unit_coordinate(dom, first)
        } else {
            dom.sample_sphere(1, rng::child(opts.seed, i as u64)).remove(0)
        }
    };
    let run = |i: usize| ascend(a, start(i), opts);
    let results: Vec<(f64, DVector<f64>)> = if a.matrix.len() * restarts > 4096 {
        (0..restarts).into_par_iter().map(run).collect()
    } else {
        (0..restarts).map(run).collect()
    };
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = i;
        }
    }
    let (lower, witness) = results.into_iter().nth(best).expect("at least one restart");
    NormEstimate { lower, witness, upper: None, method: Method::Multistart, restarts, certified: false }
}

/// Coordinate truncation model for the quotient seminorm: the tail of `A` is
/// `A ∘ (id − P_k)` with `P_k` keeping the first `cutoff` domain coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub cutoff: usize,
}

impl TailModel {
    /// `P_k` on `R^dim`.
    pub fn projection(&self, dim: usize) -> DMatrix<f64> {
        DMatrix::from_fn(dim, dim, |i, j| if i == j && i < self.cutoff { 1.0 } else { 0.0 })
    }

    /// `A ∘ (id − P_k)`.
    pub fn tail(&self, a: &Operator) -> Result<Operator> {
        let n = a.domain.dim();
        if self.cutoff > n {
            return Err(Error::TailCutoff { cutoff: self.cutoff, dim: n });
        }
        let mut m = a.matrix.clone();
        for j in 0..self.cutoff {
            m.column_mut(j).fill(0.0);
        }
        a.with_matrix(m)
    }
}

/// Surrogate for the quotient seminorm by compact operators: zero without a
/// tail model, otherwise the norm of the truncated tail.
pub fn quotient_seminorm(a: &Operator, tail: Option<&TailModel>, opts: &OpNormOptions) -> Result<f64> {
    match tail {
        None => Ok(0.0),
        Some(t) => Ok(op_norm(&t.tail(a)?, opts).lower),
    }
}

/// `α‖A‖ + (1−α) q(A)` with `q` the [`quotient_seminorm`] surrogate.
pub fn alpha_norm(a: &Operator, alpha: f64, tail: Option<&TailModel>, opts: &OpNormOptions) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let q = quotient_seminorm(a, tail, opts)?;
    Ok(alpha * op_norm(a, opts).lower + (1.0 - alpha) * q)
}

/// Which norm an operator space carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NormMode {
    Plain,
    Alpha { alpha: f64, tail: Option<TailModel> },
}

impl NormMode {
    pub fn norm(&self, a: &Operator, opts: &OpNormOptions) -> Result<f64> {
        match self {
            NormMode::Plain => Ok(op_norm(a, opts).lower),
            NormMode::Alpha { alpha, tail } => alpha_norm(a, *alpha, tail.as_ref(), opts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sp(s: &str) -> SpaceSpec {
        s.parse().unwrap()
    }

    fn hadamard(dom: &str, cod: &str) -> Operator {
        Operator::from_rows(&[&[1.0, 1.0], &[1.0, -1.0]], sp(dom), sp(cod)).unwrap()
    }

    fn check_witness(a: &Operator, e: &NormEstimate) {
        assert_abs_diff_eq!(ratio(a, &e.witness), e.lower, epsilon = 1e-9 * (1.0 + e.lower));
        if let Some(u) = e.upper {
            assert!(u >= e.lower - 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = Operator::new(DMatrix::zeros(2, 3), sp("lp:p=2:n=2"), sp("lp:p=2:n=2"));
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn closed_form_examples() {
        let o = OpNormOptions::default();
        let id = Operator::identity(sp("lp:p=2:n=3"));
        let e = op_norm(&id, &o);
        assert_abs_diff_eq!(e.lower, 1.0, epsilon = 1e-12);
        assert!(e.certified);

        let h = hadamard("lp:p=2:n=2", "lp:p=2:n=2");
        let e = op_norm(&h, &o);
        assert_abs_diff_eq!(e.lower, 2f64.sqrt(), epsilon = 1e-12);
        check_witness(&h, &e);

        let h = hadamard("lp:p=1:n=2", "lp:p=1:n=2");
        assert_abs_diff_eq!(op_norm(&h, &o).lower, 2.0, epsilon = 1e-12);

        let h = hadamard("lp:p=inf:n=2", "lp:p=1:n=2");
        let e = op_norm(&h, &o);
        assert_eq!(e.method, Method::Brute);
        assert_abs_diff_eq!(e.lower, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn row_formula_matches_brute_force() {
        let o = OpNormOptions::default();
        let a = Operator::from_rows(&[&[1.0, -2.0, 0.5], &[0.3, 0.3, -1.0]], sp("lp:p=inf:n=3"), sp("lp:p=inf:n=2")).unwrap();
        let e = op_norm(&a, &o);
        assert_eq!(e.method, Method::Exact);
        assert_abs_diff_eq!(e.lower, 3.5, epsilon = 1e-12);
        check_witness(&a, &e);
    }

    #[test]
    fn weighted_closed_forms() {
        let o = OpNormOptions::default();
        let a = Operator::from_rows(&[&[1.0, 2.0], &[3.0, -1.0]], sp("wlp:p=1:w=2,4"), sp("lp:p=2:n=2")).unwrap();
        let e = op_norm(&a, &o);
        // columns scaled by 1/w_j
        let expected = (10f64.sqrt() / 2.0).max(5f64.sqrt() / 4.0);
        assert_abs_diff_eq!(e.lower, expected, epsilon = 1e-12);
        check_witness(&a, &e);
    }

    #[test]
    fn general_case_uses_multistart() {
        let a = hadamard("lp:p=3:n=2", "lp:p=1.5:n=2");
        let e = op_norm(&a, &OpNormOptions::default());
        assert_eq!(e.method, Method::Multistart);
        assert!(!e.certified);
        check_witness(&a, &e);
        let oracle = oracle::op_norm_oracle(&a, 41).unwrap();
        assert!((e.lower - oracle).abs() <= 1e-6 * oracle);
    }

    #[test]
    fn alpha_norm_examples() {
        let o = OpNormOptions::default();
        let d = Operator::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 0.25, 0.125])),
            sp("lp:p=2:n=4"),
            sp("lp:p=2:n=4"),
        )
        .unwrap();
        let tail = TailModel { cutoff: 2 };
        assert_abs_diff_eq!(quotient_seminorm(&d, Some(&tail), &o).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha_norm(&d, 0.8, Some(&tail), &o).unwrap(), 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha_norm(&d, 1.0, Some(&tail), &o).unwrap(), op_norm(&d, &o).lower, epsilon = 1e-15);
        assert_eq!(alpha_norm(&d, 0.5, None, &o).unwrap(), 0.5);
        assert!(matches!(
            alpha_norm(&d, 0.5, Some(&TailModel { cutoff: 5 }), &o),
            Err(Error::TailCutoff { .. })
        ));
        assert!(alpha_norm(&d, 1.5, None, &o).is_err());
    }

    #[test]
    fn tail_projection_idempotent() {
        let t = TailModel { cutoff: 3 };
        let p = t.projection(5);
        assert_eq!(&p * &p, p);
    }

    fn random_operator(seed: u64, rows: usize, cols: usize, p: f64, q: f64) -> Operator {
        let mut r = rng::rng(seed);
        use rand_distr::{Distribution, StandardNormal};
        let m = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r));
        Operator::new(m, SpaceSpec::lp(p, cols).unwrap(), SpaceSpec::lp(q, rows).unwrap()).unwrap()
    }

    const EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scaling(seed in 0u64..1000, pi in 0usize..5, qi in 0usize..5, c in -5.0f64..5.0) {
            let a = random_operator(seed, 3, 3, EXPONENTS[pi], EXPONENTS[qi]);
            let o = OpNormOptions::default();
            let base = op_norm(&a, &o).lower;
            let scaled = op_norm(&a.scaled(c), &o).lower;
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-8 * (1.0 + base));
        }

        #[test]
        fn transpose_duality(seed in 0u64..1000, pi in 0usize..5, qi in 0usize..5) {
            let a = random_operator(seed, 4, 4, EXPONENTS[pi], EXPONENTS[qi]);
            let o = OpNormOptions::default();
            let n1 = op_norm(&a, &o).lower;
            let n2 = op_norm(&a.transpose(), &o).lower;
            prop_assert!((n1 - n2).abs() <= 1e-3 * n1, "{} vs {}", n1, n2);
        }

        #[test]
        fn witness_consistency(seed in 0u64..1000, pi in 0usize..5, qi in 0usize..5) {
            let a = random_operator(seed, 3, 4, EXPONENTS[pi], EXPONENTS[qi]);
            let e = op_norm(&a, &OpNormOptions::default());
            prop_assert!((ratio(&a, &e.witness) - e.lower).abs() <= 1e-9 * (1.0 + e.lower));
        }

        #[test]
        fn submultiplicative(seed in 0u64..1000, pi in 0usize..5, qi in 0usize..5, ri in 0usize..5) {
            let b = random_operator(seed, 3, 3, EXPONENTS[pi], EXPONENTS[qi]);
            let a0 = random_operator(seed ^ 0x55, 3, 3, EXPONENTS[qi], EXPONENTS[ri]);
            let o = OpNormOptions::default();
            let ab = a0.compose(&b).unwrap();
            let lhs = op_norm(&ab, &o).lower;
            let rhs = op_norm(&a0, &o).lower * op_norm(&b, &o).lower;
            prop_assert!(lhs <= rhs + 1e-8 * (1.0 + rhs), "{} > {}", lhs, rhs);
        }
    }
}

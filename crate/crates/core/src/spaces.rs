//! Finite-dimensional normed spaces.
//!
//! A [`SpaceSpec`] fixes the norm on `R^n`: plain ℓ_p, weighted ℓ_p, or an
//! ℓ_p-sum of inner spaces. Vectors and functionals are plain coordinate
//! arrays; a functional `f` acts on `x` by the dot product, and its norm is
//! the norm of the [dual](SpaceSpec::dual) space.
//!
//! All supported norms are absolute (they depend only on `|x_i|`) and
//! monotone in each `|x_i|`. Nets and the covering code rely on that.

mod grammar;
mod net;

use std::fmt;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;
use crate::{Error, Result};

pub use net::{unit_net, DyadicLattice, FactorNet, UnitNet};

/// Exponent `p ∈ [1, ∞]`. Infinity is its own variant, never a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidSpec(format!("exponent {p} outside [1, inf]")))
        }
    }

    /// Conjugate exponent `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(p) if p == 1.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_one(self) -> bool {
        self == Exponent::Finite(1.0)
    }

    pub fn is_two(self) -> bool {
        self == Exponent::Finite(2.0)
    }

    pub fn is_infinite(self) -> bool {
        self == Exponent::Infinity
    }

    /// ℓ_p norm of `x`.
    pub fn lp_norm(self, x: &[f64]) -> f64 {
        match self {
            Exponent::Infinity => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            Exponent::Finite(p) if p == 1.0 => x.iter().map(|v| v.abs()).sum(),
            Exponent::Finite(p) if p == 2.0 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Exponent::Finite(p) => {
                let scale = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                if scale == 0.0 {
                    return 0.0;
                }
                let s: f64 = x.iter().map(|v| (v.abs() / scale).powf(p)).sum();
                scale * s.powf(1.0 / p)
            }
        }
    }

    /// Unit vector `x` in ℓ_p with `⟨g, x⟩ = ‖g‖_{p'}`.
    fn lp_norming(self, g: &[f64]) -> Vec<f64> {
        let n = g.len();
        let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
        match self {
            Exponent::Infinity => g.iter().map(|&v| sign(v)).collect(),
            Exponent::Finite(p) if p == 1.0 => {
                let mut k = 0;
                for i in 1..n {
                    if g[i].abs() > g[k].abs() {
                        k = i;
                    }
                }
                let mut x = vec![0.0; n];
                if n > 0 {
                    x[k] = sign(g[k]);
                }
                x
            }
            Exponent::Finite(p) => {
                let q = p / (p - 1.0);
                let scale = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                if scale == 0.0 {
                    let mut x = vec![0.0; n];
                    if n > 0 {
                        x[0] = 1.0;
                    }
                    return x;
                }
                let mut x: Vec<f64> = if p == 2.0 {
                    g.iter().map(|v| v / scale).collect()
                } else {
                    g.iter().map(|&v| sign(v) * (v.abs() / scale).powf(q - 1.0)).collect()
                };
                let nx = self.lp_norm(&x);
                x.iter_mut().for_each(|v| *v /= nx);
                x
            }
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Infinity => write!(f, "inf"),
            Exponent::Finite(p) => write!(f, "{p}"),
        }
    }
}

/// Descriptor of a finite-dimensional normed space.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSpec {
    /// `ℓ_p^dim`.
    Lp { p: Exponent, dim: usize },
    /// `(Σ w_i |x_i|^p)^{1/p}`, or `max w_i |x_i|` for `p = ∞`.
    WeightedLp { p: Exponent, weights: Vec<f64> },
    /// `‖(‖x_1‖_{B_1}, …, ‖x_m‖_{B_m})‖_p` over consecutive coordinate blocks.
    LpSum { p: Exponent, blocks: Vec<SpaceSpec> },
}

impl SpaceSpec {
    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        let s = SpaceSpec::Lp { p: Exponent::new(p)?, dim };
        s.validate()?;
        Ok(s)
    }

    pub fn weighted(p: f64, weights: Vec<f64>) -> Result<Self> {
        let s = SpaceSpec::WeightedLp { p: Exponent::new(p)?, weights };
        s.validate()?;
        Ok(s)
    }

    pub fn sum(p: f64, blocks: Vec<SpaceSpec>) -> Result<Self> {
        let s = SpaceSpec::LpSum { p: Exponent::new(p)?, blocks };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceSpec::Lp { dim, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidSpec("dimension must be positive".into()));
                }
            }
            SpaceSpec::WeightedLp { weights, .. } => {
                if weights.is_empty() {
                    return Err(Error::InvalidSpec("weighted space needs weights".into()));
                }
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidSpec(format!("weight {w} is not strictly positive")));
                }
            }
            SpaceSpec::LpSum { blocks, .. } => {
                if blocks.is_empty() {
                    return Err(Error::InvalidSpec("sum needs at least one block".into()));
                }
                for b in blocks {
                    b.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SpaceSpec::Lp { dim, .. } => *dim,
            SpaceSpec::WeightedLp { weights, .. } => weights.len(),
            SpaceSpec::LpSum { blocks, .. } => blocks.iter().map(SpaceSpec::dim).sum(),
        }
    }

    /// Plain ℓ_p exponent, if this is an unweighted ℓ_p space.
    pub fn plain_exponent(&self) -> Option<Exponent> {
        match self {
            SpaceSpec::Lp { p, .. } => Some(*p),
            _ => None,
        }
    }

    /// Diagonal scales `d` with `‖x‖ = ‖D x‖_p` for weighted spaces.
    fn scales(p: Exponent, weights: &[f64]) -> Vec<f64> {
        match p {
            Exponent::Infinity => weights.to_vec(),
            Exponent::Finite(p) => weights.iter().map(|w| w.powf(1.0 / p)).collect(),
        }
    }

    fn from_scales(p: Exponent, scales: Vec<f64>) -> SpaceSpec {
        let weights = match p {
            Exponent::Infinity => scales,
            Exponent::Finite(p) => scales.iter().map(|d| d.powf(p)).collect(),
        };
        SpaceSpec::WeightedLp { p, weights }
    }

    /// Dual space under the dot-product pairing.
    pub fn dual(&self) -> SpaceSpec {
        match self {
            SpaceSpec::Lp { p, dim } => SpaceSpec::Lp { p: p.conjugate(), dim: *dim },
            SpaceSpec::WeightedLp { p, weights } => {
                let inv: Vec<f64> = Self::scales(*p, weights).iter().map(|d| 1.0 / d).collect();
                Self::from_scales(p.conjugate(), inv)
            }
            SpaceSpec::LpSum { p, blocks } => SpaceSpec::LpSum {
                p: p.conjugate(),
                blocks: blocks.iter().map(SpaceSpec::dual).collect(),
            },
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: len });
        }
        Ok(())
    }

    /// Norm of `x`.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.norm_of(x))
    }

    /// Norm of `x` without the length check. Panics on short input.
    pub fn norm_of(&self, x: &[f64]) -> f64 {
        match self {
            SpaceSpec::Lp { p, .. } => p.lp_norm(x),
            SpaceSpec::WeightedLp { p, weights } => {
                let d = Self::scales(*p, weights);
                let scaled: Vec<f64> = x.iter().zip(&d).map(|(v, d)| v * d).collect();
                p.lp_norm(&scaled)
            }
            SpaceSpec::LpSum { p, blocks } => {
                let mut off = 0;
                let inner: Vec<f64> = blocks
                    .iter()
                    .map(|b| {
                        let n = b.dim();
                        let v = b.norm_of(&x[off..off + n]);
                        off += n;
                        v
                    })
                    .collect();
                p.lp_norm(&inner)
            }
        }
    }

    /// Dual norm of the functional `f`.
    pub fn dual_norm(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        Ok(self.dual().norm_of(f))
    }

    /// Unit vector `x` of this space with `⟨g, x⟩ = ‖g‖_*`.
    ///
    /// For `g = 0` an arbitrary unit vector is returned.
    pub fn norming_vector(&self, g: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.norming(g))
    }

    fn norming(&self, g: &[f64]) -> Vec<f64> {
        match self {
            SpaceSpec::Lp { p, .. } => p.lp_norming(g),
            SpaceSpec::WeightedLp { p, weights } => {
                let d = Self::scales(*p, weights);
                let h: Vec<f64> = g.iter().zip(&d).map(|(v, d)| v / d).collect();
                p.lp_norming(&h).iter().zip(&d).map(|(u, d)| u / d).collect()
            }
            SpaceSpec::LpSum { p, blocks } => {
                let mut off = 0;
                let mut parts = Vec::with_capacity(blocks.len());
                let mut inner = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let n = b.dim();
                    let gb = &g[off..off + n];
                    inner.push(b.dual().norm_of(gb));
                    parts.push(b.norming(gb));
                    off += n;
                }
                let outer = p.lp_norming(&inner);
                parts
                    .into_iter()
                    .zip(outer)
                    .flat_map(|(part, u)| part.into_iter().map(move |v| v * u))
                    .collect()
            }
        }
    }

    /// Functional `φ` with `‖φ‖_* = 1` and `φ(y) = ‖y‖`: a subgradient of the
    /// norm at `y`.
    pub fn subgradient(&self, y: &[f64]) -> DVector<f64> {
        self.dual().norming_vector(y)
    }

    /// Norm of the all-ones vector.
    pub fn ones_norm(&self) -> f64 {
        self.norm_of(&vec![1.0; self.dim()])
    }

    /// A constant `κ > 0` with `‖x‖ ≥ κ ‖x‖_2` for all `x`.
    pub fn l2_lower_constant(&self) -> f64 {
        fn lp_ratio(p: Exponent, n: usize) -> f64 {
            match p {
                Exponent::Infinity => 1.0 / (n as f64).sqrt(),
                Exponent::Finite(p) if p >= 2.0 => (n as f64).powf(1.0 / p - 0.5),
                Exponent::Finite(_) => 1.0,
            }
        }
        match self {
            SpaceSpec::Lp { p, dim } => lp_ratio(*p, *dim),
            SpaceSpec::WeightedLp { p, weights } => {
                let dmin = Self::scales(*p, weights).into_iter().fold(f64::INFINITY, f64::min);
                dmin * lp_ratio(*p, weights.len())
            }
            SpaceSpec::LpSum { p, blocks } => {
                let inner = blocks.iter().map(SpaceSpec::l2_lower_constant).fold(f64::INFINITY, f64::min);
                inner * lp_ratio(*p, blocks.len())
            }
        }
    }

    /// `count` unit vectors, deterministic in `seed`.
    pub fn sample_sphere(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut r = rng::rng(seed);
        let n = self.dim();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
            let nv = self.norm_of(v.as_slice());
            if nv > 1e-300 {
                out.push(v / nv);
            }
        }
        out
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceSpec::Lp { p, dim } => write!(f, "lp:p={p}:n={dim}"),
            SpaceSpec::WeightedLp { p, weights } => {
                let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
                write!(f, "wlp:p={p}:w={}", w.join(","))
            }
            SpaceSpec::LpSum { p, blocks } => {
                let b: Vec<String> = blocks.iter().map(|b| b.to_string()).collect();
                write!(f, "sum:p={p}:[{}]", b.join(";"))
            }
        }
    }
}

/// Dual space of `s`.
pub fn dual_space(s: &SpaceSpec) -> SpaceSpec {
    s.dual()
}

/// Norm of `v` in `s`.
pub fn vector_norm(s: &SpaceSpec, v: &[f64]) -> Result<f64> {
    s.norm(v)
}

/// `count` seeded unit vectors of `s`.
pub fn sample_sphere(s: &SpaceSpec, count: usize, seed: u64) -> Vec<DVector<f64>> {
    s.sample_sphere(count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spaces() -> Vec<SpaceSpec> {
        vec![
            SpaceSpec::lp(1.0, 3).unwrap(),
            SpaceSpec::lp(1.5, 4).unwrap(),
            SpaceSpec::lp(2.0, 3).unwrap(),
            SpaceSpec::lp(3.0, 2).unwrap(),
            SpaceSpec::lp(f64::INFINITY, 3).unwrap(),
            SpaceSpec::weighted(2.0, vec![1.0, 4.0, 0.5]).unwrap(),
            SpaceSpec::weighted(1.0, vec![2.0, 3.0]).unwrap(),
            SpaceSpec::weighted(f64::INFINITY, vec![2.0, 0.5]).unwrap(),
            "sum:p=2:[lp:p=1:n=2;lp:p=inf:n=2]".parse().unwrap(),
            "sum:p=inf:[lp:p=3:n=2;wlp:p=1.5:w=1,2]".parse().unwrap(),
        ]
    }

    #[test]
    fn dual_examples() {
        assert_eq!(SpaceSpec::lp(2.0, 3).unwrap().dual(), SpaceSpec::lp(2.0, 3).unwrap());
        assert_eq!(SpaceSpec::lp(1.0, 4).unwrap().dual(), SpaceSpec::lp(f64::INFINITY, 4).unwrap());
        let d = SpaceSpec::lp(1.5, 2).unwrap().dual();
        match d {
            SpaceSpec::Lp { p: Exponent::Finite(q), dim } => {
                assert_abs_diff_eq!(q, 3.0, epsilon = 1e-12);
                assert_eq!(dim, 2);
            }
            other => panic!("unexpected dual {other}"),
        }
    }

    #[test]
    fn dual_of_dual_is_identity_in_value() {
        for s in spaces() {
            let dd = s.dual().dual();
            let x = [0.3, -1.2, 0.7, 2.0, -0.1];
            let x = &x[..s.dim()];
            assert_abs_diff_eq!(dd.norm_of(x), s.norm_of(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_examples() {
        let v = [3.0, 4.0];
        assert_eq!(SpaceSpec::lp(2.0, 2).unwrap().norm(&v).unwrap(), 5.0);
        assert_eq!(SpaceSpec::lp(1.0, 2).unwrap().norm(&v).unwrap(), 7.0);
        assert_eq!(SpaceSpec::lp(f64::INFINITY, 2).unwrap().norm(&v).unwrap(), 4.0);
        assert_eq!(
            SpaceSpec::lp(2.0, 3).unwrap().norm(&v),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        );
    }

    #[test]
    fn weighted_and_sum_norms() {
        let w = SpaceSpec::weighted(2.0, vec![4.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w.norm_of(&[1.0, 1.0]), 5f64.sqrt(), epsilon = 1e-15);
        let s: SpaceSpec = "sum:p=1:[lp:p=2:n=2;lp:p=inf:n=1]".parse().unwrap();
        assert_abs_diff_eq!(s.norm_of(&[3.0, 4.0, -2.0]), 7.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SpaceSpec::lp(0.5, 2).is_err());
        assert!(SpaceSpec::lp(2.0, 0).is_err());
        assert!(SpaceSpec::weighted(2.0, vec![1.0, 0.0]).is_err());
        assert!(SpaceSpec::sum(2.0, vec![]).is_err());
    }

    #[test]
    fn norming_vector_attains_dual_norm() {
        for s in spaces() {
            let g: Vec<f64> = [0.4, -1.1, 0.25, 0.9, -0.6][..s.dim()].to_vec();
            let x = s.norming_vector(&g);
            assert_abs_diff_eq!(s.norm_of(x.as_slice()), 1.0, epsilon = 1e-12);
            let pairing: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(pairing, s.dual_norm(&g).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_samples_are_unit_and_deterministic() {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let a = s.sample_sphere(1, 7);
        assert_eq!(a.len(), 1);
        assert!((s.norm_of(a[0].as_slice()) - 1.0).abs() <= 1e-12);
        assert_eq!(a, s.sample_sphere(1, 7));
        let l1 = SpaceSpec::lp(1.0, 3).unwrap();
        let pts = l1.sample_sphere(100, 42);
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|v| (l1.norm_of(v.as_slice()) - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn l2_lower_constant_is_valid() {
        for s in spaces() {
            let k = s.l2_lower_constant();
            for v in s.sample_sphere(200, 3) {
                assert!(s.norm_of(v.as_slice()) >= k * v.norm() - 1e-12, "{s}");
            }
        }
    }

    fn spec_index() -> impl Strategy<Value = usize> {
        0..10usize
    }

    proptest! {
        #[test]
        fn homogeneity(idx in spec_index(), c in -50.0f64..50.0, seed in 0u64..1000) {
            let s = &spaces()[idx];
            let v = &s.sample_sphere(1, seed)[0] * 3.7;
            let lhs = s.norm_of((&v * c).as_slice());
            let rhs = c.abs() * s.norm_of(v.as_slice());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
        }

        #[test]
        fn triangle_inequality(idx in spec_index(), seed in 0u64..10_000) {
            let s = &spaces()[idx];
            let pts = s.sample_sphere(3, seed);
            let (a, b) = (&pts[0] * 2.0, &pts[1] * 0.5);
            let lhs = s.norm_of((&a + &b).as_slice());
            prop_assert!(lhs <= s.norm_of(a.as_slice()) + s.norm_of(b.as_slice()) + 1e-10);
        }

        #[test]
        fn duality_pairing(idx in spec_index(), seed in 0u64..10_000) {
            let s = &spaces()[idx];
            let v = &s.sample_sphere(1, seed)[0] * 1.3;
            let f = &s.dual().sample_sphere(1, seed ^ 0xdead)[0] * 0.7;
            let pairing: f64 = v.dot(&f);
            let bound = s.dual_norm(f.as_slice()).unwrap() * s.norm_of(v.as_slice());
            prop_assert!(pairing.abs() <= bound + 1e-10);
        }

        #[test]
        fn grammar_round_trip(idx in spec_index()) {
            let s = &spaces()[idx];
            let parsed: SpaceSpec = s.to_string().parse().unwrap();
            prop_assert_eq!(&parsed, s);
        }
    }
}

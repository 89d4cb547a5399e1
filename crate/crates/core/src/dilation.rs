//! The dilation space of a Schauder frame: coefficient sequences `a` with
//!
//! `‖a‖ = max( sup_{θ, K} ‖Σ_{k≤K} θ_k Σ_{i∈block k} a_i x_i‖, sup_m ‖Σ_{i≤m} a_i x_i‖ )`,
//!
//! the maps `T x = (f_i(x))_i` and `S a = Σ a_i x_i`, and `P = T∘S`.
//! At finite length the space is already complete.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::frames::{block_unconditional_bound, frame_bound, SchauderFrame};
use crate::opnorm::OpNormOptions;
use crate::rng;
use crate::search::{maximize, SearchBudget};
use crate::signs::{SignMode, MAX_EXHAUSTIVE_BLOCKS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DilationSpace {
    pub frame: SchauderFrame,
}

/// The two components of the dilation norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormParts {
    pub sign: f64,
    pub prefix: f64,
}

impl NormParts {
    pub fn value(&self) -> f64 {
        self.sign.max(self.prefix)
    }
}

impl DilationSpace {
    pub fn new(frame: SchauderFrame) -> Result<Self> {
        if frame.block_count() > MAX_EXHAUSTIVE_BLOCKS {
            return Err(Error::TooManyBlocks { blocks: frame.block_count(), max: MAX_EXHAUSTIVE_BLOCKS });
        }
        Ok(DilationSpace { frame })
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    fn check(&self, a: &DVector<f64>) -> Result<()> {
        if a.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: a.len() });
        }
        Ok(())
    }

    /// Per-block vectors `Σ_{i∈block k} a_i x_i`, summed in index order.
    fn block_vectors(&self, a: &DVector<f64>) -> Vec<DVector<f64>> {
        let d = self.frame.space.dim();
        (0..self.frame.block_count())
            .map(|k| {
                let mut v = DVector::zeros(d);
                for i in self.frame.block_range(k) {
                    v += &self.frame.vectors[i] * a[i];
                }
                v
            })
            .collect()
    }

    /// Both components. Every sign pattern's sum is formed from scratch in
    /// block order, so flipping block signs of `a` permutes the evaluated
    /// values exactly.
    pub fn norm_parts(&self, a: &DVector<f64>) -> Result<NormParts> {
        self.check(a)?;
        Ok(self.parts_unchecked(a))
    }

    fn parts_unchecked(&self, a: &DVector<f64>) -> NormParts {
        let space = &self.frame.space;
        let d = space.dim();
        let v = self.block_vectors(a);
        let k = v.len();
        let mut sign = 0.0f64;
        for mask in 0..(1u64 << (k - 1)) {
            let mut acc = DVector::zeros(d);
            for (j, vj) in v.iter().enumerate() {
                if j > 0 && (mask >> (j - 1)) & 1 == 1 {
                    acc -= vj;
                } else {
                    acc += vj;
                }
                sign = sign.max(space.norm_of(acc.as_slice()));
            }
        }
        let mut acc = DVector::zeros(d);
        let mut prefix = 0.0f64;
        for (i, x) in self.frame.vectors.iter().enumerate() {
            acc += x * a[i];
            prefix = prefix.max(space.norm_of(acc.as_slice()));
        }
        NormParts { sign, prefix }
    }

    pub fn norm(&self, a: &DVector<f64>) -> Result<f64> {
        Ok(self.norm_parts(a)?.value())
    }

    /// `x ↦ (f_i(x))_i`.
    pub fn embed(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.frame.space.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        Ok(DVector::from_iterator(self.len(), self.frame.functionals.iter().map(|f| f.dot(x))))
    }

    /// `a ↦ Σ a_i x_i`.
    pub fn recover(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(a)?;
        let mut acc = DVector::zeros(self.frame.space.dim());
        for (x, c) in self.frame.vectors.iter().zip(a.iter()) {
            acc += x * *c;
        }
        Ok(acc)
    }

    /// `T(S(a))`.
    pub fn project(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        self.embed(&self.recover(a)?)
    }

    /// `a` with block `k` negated for every bit `k` set in `mask`.
    pub fn flip_blocks(&self, a: &DVector<f64>, mask: u64) -> DVector<f64> {
        let mut b = a.clone();
        for k in 0..self.frame.block_count() {
            if (mask >> k) & 1 == 1 {
                for i in self.frame.block_range(k) {
                    b[i] = -b[i];
                }
            }
        }
        b
    }
}

pub fn dilation_norm(d: &DilationSpace, a: &DVector<f64>) -> Result<f64> {
    d.norm(a)
}

pub fn embed_t(d: &DilationSpace, x: &DVector<f64>) -> Result<DVector<f64>> {
    d.embed(x)
}

pub fn recover_s(d: &DilationSpace, a: &DVector<f64>) -> Result<DVector<f64>> {
    d.recover(a)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UfddMeasurement {
    /// `sup ‖θ·a‖ / ‖a‖` over the samples and all block signs.
    pub constant: f64,
    /// The sign component took the identical value under every flip.
    pub sign_component_invariant: bool,
    pub samples: usize,
}

/// Measured unconditional constant of the block decomposition.
pub fn ufdd_constant(d: &DilationSpace, samples: usize, seed: u64) -> Result<UfddMeasurement> {
    if samples == 0 {
        return Err(Error::InvalidParameter("ufdd sampling needs at least one sample".into()));
    }
    let k = d.frame.block_count();
    let per: Vec<(f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let a = gaussian(d.len(), rng::child(seed, s as u64));
            let base = d.parts_unchecked(&a);
            let n0 = base.value();
            let mut worst = 1.0f64;
            let mut same = true;
            for mask in 1..(1u64 << k) {
                let p = d.parts_unchecked(&d.flip_blocks(&a, mask));
                same &= p.sign == base.sign;
                if n0 > 0.0 {
                    worst = worst.max(p.value() / n0);
                }
            }
            (worst, same)
        })
        .collect();
    Ok(UfddMeasurement {
        constant: per.iter().map(|p| p.0).fold(1.0, f64::max),
        sign_component_invariant: per.iter().all(|p| p.1),
        samples,
    })
}

fn gaussian(n: usize, seed: u64) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng::rng(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DilationOptions {
    pub samples: usize,
    pub climbs: usize,
    pub steps: usize,
    pub ufdd_samples: usize,
    pub identity_samples: usize,
    pub seed: u64,
}

impl Default for DilationOptions {
    fn default() -> Self {
        DilationOptions { samples: 128, climbs: 4, steps: 300, ufdd_samples: 100, identity_samples: 1000, seed: 0x6469_6c61 }
    }
}

/// Lower-bound estimates of `‖S‖`, `‖T‖`, `‖P‖` from seeded search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapNorms {
    pub s_norm: f64,
    pub t_norm: f64,
    pub p_norm: f64,
}

pub fn map_norms(d: &DilationSpace, o: &DilationOptions) -> MapNorms {
    let dim = d.frame.space.dim();
    let n = d.len();
    let space = &d.frame.space;
    let budget = |i: u64| SearchBudget { samples: o.samples, climbs: o.climbs, steps: o.steps, seed: rng::child(o.seed, i) };

    let s_ratio = |a: &DVector<f64>| {
        let na = d.parts_unchecked(a).value();
        if na == 0.0 {
            return 0.0;
        }
        space.norm_of(d.recover(a).expect("length").as_slice()) / na
    };
    let t_ratio = |x: &DVector<f64>| {
        let nx = space.norm_of(x.as_slice());
        if nx == 0.0 {
            return 0.0;
        }
        d.parts_unchecked(&d.embed(x).expect("length")).value() / nx
    };
    let p_ratio = |a: &DVector<f64>| {
        let na = d.parts_unchecked(a).value();
        if na == 0.0 {
            return 0.0;
        }
        d.parts_unchecked(&d.project(a).expect("length")).value() / na
    };
    let units: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    let coords: Vec<DVector<f64>> = (0..dim).map(|i| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    let (s_norm, _) = maximize(n, s_ratio, &units, budget(0));
    let (t_norm, x_best) = maximize(dim, t_ratio, &coords, budget(1));
    let mut p_starts = units;
    p_starts.push(d.embed(&x_best).expect("length"));
    let (p_norm, _) = maximize(n, p_ratio, &p_starts, budget(2));
    MapNorms { s_norm, t_norm, p_norm }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DilationReport {
    pub frame_bound: f64,
    pub block_bound: f64,
    pub s_norm: f64,
    pub t_norm: f64,
    pub p_norm: f64,
    pub ufdd_constant: f64,
    pub lambda_plus_eps: f64,
    /// `max ‖S(T(x)) − x‖` over sampled `x`.
    pub identity_error: f64,
    /// `max ‖P(P(a)) − P(a)‖` over sampled `a`.
    pub idempotence_error: f64,
    pub sign_component_invariant: bool,
    pub findings: Vec<String>,
}

/// Measures the dilation of `frame`; `lambda_plus_eps` is the bound the
/// construction promises for `‖T‖` and `‖P‖`.
pub fn dilation_report(
    frame: &SchauderFrame,
    lambda_plus_eps: f64,
    o: &DilationOptions,
    opts: &OpNormOptions,
) -> Result<DilationReport> {
    let d = DilationSpace::new(frame.clone())?;
    let fb = frame_bound(frame, opts).value;
    let bb = block_unconditional_bound(frame, SignMode::Exhaustive, opts)?.value;
    let norms = map_norms(&d, o);
    let ufdd = ufdd_constant(&d, o.ufdd_samples, rng::child(o.seed, 10))?;

    let space = &frame.space;
    let xs = space.sample_sphere(o.identity_samples.max(1), rng::child(o.seed, 11));
    let mut identity_error = 0.0f64;
    for x in &xs {
        identity_error = identity_error.max(space.norm_of((d.recover(&d.embed(x)?)? - x).as_slice()));
    }
    let idempotence_error = (0..o.ufdd_samples.max(1))
        .map(|s| {
            let a = gaussian(d.len(), rng::child(o.seed, 1000 + s as u64));
            let pa = d.project(&a)?;
            let ppa = d.project(&pa)?;
            d.norm(&(ppa - pa))
        })
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;

    let mut findings = Vec::new();
    if norms.s_norm > 1.0 + 1e-6 {
        findings.push(format!("S norm {} exceeds 1", norms.s_norm));
    }
    if norms.t_norm > lambda_plus_eps + 1e-6 {
        findings.push(format!("T norm {} exceeds lambda+eps = {lambda_plus_eps}", norms.t_norm));
    }
    if norms.p_norm > lambda_plus_eps * (1.0 + 1e-6) {
        findings.push(format!("P norm {} exceeds lambda+eps = {lambda_plus_eps}", norms.p_norm));
    }
    if identity_error > 1e-9 {
        findings.push(format!("S(T(x)) differs from x by {identity_error}"));
    }
    if idempotence_error > 1e-9 {
        findings.push(format!("P is not idempotent: defect {idempotence_error}"));
    }
    if !ufdd.sign_component_invariant {
        findings.push("sign component changed under a block sign flip".into());
    }
    if ufdd.constant > 1.0 + 1e-6 {
        findings.push(format!("measured block unconditional constant {} exceeds 1", ufdd.constant));
    }
    Ok(DilationReport {
        frame_bound: fb,
        block_bound: bb,
        s_norm: norms.s_norm,
        t_norm: norms.t_norm,
        p_norm: norms.p_norm,
        ufdd_constant: ufdd.constant,
        lambda_plus_eps,
        identity_error,
        idempotence_error,
        sign_component_invariant: ufdd.sign_component_invariant,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ApproximatingSequence;
    use crate::frames::dilate_to_frame;
    use crate::spaces::SpaceSpec;
    use approx::assert_abs_diff_eq;

    fn l2_space() -> DilationSpace {
        let s = SpaceSpec::lp(2.0, 3).unwrap();
        let seq = ApproximatingSequence::canonical(&s).unwrap();
        let (fr, _) = dilate_to_frame(&seq, 1.0, 256, &OpNormOptions::default()).unwrap();
        DilationSpace::new(fr).unwrap()
    }

    fn skew_space() -> DilationSpace {
        let s = SpaceSpec::lp(1.0, 2).unwrap();
        let b = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])];
        let seq = ApproximatingSequence::from_basis(&b, &s).unwrap();
        let (fr, _) = dilate_to_frame(&seq, 1.0, 256, &OpNormOptions::default()).unwrap();
        DilationSpace::new(fr).unwrap()
    }

    fn e(n: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn norm_examples() {
        let d = l2_space();
        let mut a = DVector::zeros(18);
        for i in 0..6 {
            a[i] = 1.0 / 6.0;
        }
        assert_abs_diff_eq!(d.norm(&a).unwrap(), 1.0, epsilon = 1e-12);
        let t = d.embed(&e(3, 0)).unwrap();
        assert_abs_diff_eq!(t, a, epsilon = 1e-15);
        assert_abs_diff_eq!(d.norm(&t).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(d.norm(&DVector::zeros(18)).unwrap(), 0.0);
        assert!(d.norm(&DVector::zeros(5)).is_err());
        assert_eq!(d.embed(&DVector::zeros(3)).unwrap(), DVector::zeros(18));
    }

    #[test]
    fn recover_examples() {
        let d = l2_space();
        let a = e(18, 0);
        assert_abs_diff_eq!(d.recover(&a).unwrap(), e(3, 0), epsilon = 1e-15);
        assert_abs_diff_eq!(d.norm(&a).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(d.recover(&DVector::zeros(18)).unwrap(), DVector::zeros(3));
        for x in d.frame.space.sample_sphere(200, 3) {
            let back = d.recover(&d.embed(&x).unwrap()).unwrap();
            assert!((back - &x).amax() <= 1e-9);
        }
    }

    #[test]
    fn embedding_norm_bounded() {
        let d = l2_space();
        for x in d.frame.space.sample_sphere(200, 4) {
            assert!(d.norm(&d.embed(&x).unwrap()).unwrap() <= 2.0 + 1e-8);
        }
    }

    #[test]
    fn recover_is_contractive() {
        let d = skew_space();
        for s in 0..200 {
            let a = gaussian(d.len(), s);
            let sa = d.frame.space.norm_of(d.recover(&a).unwrap().as_slice());
            assert!(sa <= d.norm(&a).unwrap() + 1e-8);
        }
    }

    #[test]
    fn sign_component_exactly_invariant() {
        for d in [l2_space(), skew_space()] {
            for s in 0..20 {
                let a = gaussian(d.len(), 100 + s);
                let base = d.norm_parts(&a).unwrap().sign;
                for mask in 0..(1u64 << d.frame.block_count()) {
                    assert_eq!(d.norm_parts(&d.flip_blocks(&a, mask)).unwrap().sign, base);
                }
            }
        }
    }

    #[test]
    fn ufdd_examples() {
        let u = ufdd_constant(&l2_space(), 20, 1).unwrap();
        assert!((u.constant - 1.0).abs() <= 1e-9);
        assert!(u.sign_component_invariant);

        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let one = SchauderFrame::new(s, vec![e(2, 0)], vec![e(2, 0)], vec![0]).unwrap();
        let u = ufdd_constant(&DilationSpace::new(one).unwrap(), 5, 1).unwrap();
        assert_eq!(u.constant, 1.0);

        let u = ufdd_constant(&skew_space(), 20, 1).unwrap();
        assert!(u.constant >= 1.0);
        assert!(ufdd_constant(&skew_space(), 0, 1).is_err());
    }

    #[test]
    fn report_on_canonical_l2() {
        let d = l2_space();
        let o = DilationOptions { ufdd_samples: 10, identity_samples: 50, ..Default::default() };
        let r = dilation_report(&d.frame, 2.0, &o, &OpNormOptions::default()).unwrap();
        assert!(r.findings.is_empty(), "{:?}", r.findings);
        assert!(r.s_norm <= 1.0 + 1e-6 && r.s_norm >= 1.0 - 1e-9);
        assert!(r.p_norm <= 2.0 * (1.0 + 1e-6));
        assert_abs_diff_eq!(r.frame_bound, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.block_bound, 1.0, epsilon = 1e-12);
    }
}

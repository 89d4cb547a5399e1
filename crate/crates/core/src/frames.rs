//! Schauder frames `(x_i, f_i)` with a block partition, and the dilation of
//! an approximating sequence into a block unconditional frame.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{auto_mode, sign_sup, ApproximatingSequence};
use crate::opnorm::{op_norm, OpNormOptions, Operator};
use crate::signs::{sign_supremum, SignMode, SignSup};
use crate::spaces::SpaceSpec;
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;
/// Residual grid density for the inner basis constant of small ranges.
const BASIS_GRID: usize = 41;

#[derive(Clone, Debug, PartialEq)]
pub struct SchauderFrame {
    pub space: SpaceSpec,
    pub vectors: Vec<DVector<f64>>,
    pub functionals: Vec<DVector<f64>>,
    /// Block start indices, `blocks[0] = 0`, strictly increasing.
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reconstruction {
    #[serde(serialize_with = "crate::opnorm::ser_vec")]
    pub x_hat: DVector<f64>,
    /// `‖x̂ − x‖`.
    pub error: f64,
    /// `max_m ‖Σ_{i≤m} f_i(x) x_i‖`.
    pub max_partial: f64,
}

#[derive(Serialize, Deserialize)]
struct PairFile {
    x: Vec<f64>,
    f: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FrameFile {
    pairs: Vec<PairFile>,
    blocks: Vec<usize>,
    space: String,
}

impl SchauderFrame {
    pub fn new(
        space: SpaceSpec,
        vectors: Vec<DVector<f64>>,
        functionals: Vec<DVector<f64>>,
        blocks: Vec<usize>,
    ) -> Result<Self> {
        space.validate()?;
        let d = space.dim();
        if vectors.is_empty() || vectors.len() != functionals.len() {
            return Err(Error::InvalidFrame(format!(
                "{} vectors and {} functionals",
                vectors.len(),
                functionals.len()
            )));
        }
        let dual = space.dual();
        for (i, (x, f)) in vectors.iter().zip(&functionals).enumerate() {
            if x.len() != d || f.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: if x.len() != d { x.len() } else { f.len() } });
            }
            let nx = space.norm_of(x.as_slice());
            if (nx - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidFrame(format!("vector {i} has norm {nx}, expected 1")));
            }
            let nf = dual.norm_of(f.as_slice());
            if nf > 1.0 + NORM_TOL {
                return Err(Error::InvalidFrame(format!("functional {i} has norm {nf} > 1")));
            }
        }
        if blocks.first() != Some(&0)
            || blocks.windows(2).any(|w| w[0] >= w[1])
            || blocks.last().is_some_and(|&b| b >= vectors.len())
        {
            return Err(Error::InvalidFrame(format!("block starts {blocks:?} do not partition 0..{}", vectors.len())));
        }
        Ok(SchauderFrame { space, vectors, functionals, blocks })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.blocks.get(k + 1).copied().unwrap_or(self.len());
        self.blocks[k]..end
    }

    /// Index of the block containing pair `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.blocks.partition_point(|&b| b <= i) - 1
    }

    fn sum_over(&self, range: std::ops::Range<usize>) -> DMatrix<f64> {
        let d = self.space.dim();
        let mut m = DMatrix::zeros(d, d);
        for i in range {
            m += &self.vectors[i] * self.functionals[i].transpose();
        }
        m
    }

    /// `Σ_{i ∈ block k} f_i ⊗ x_i`.
    pub fn block_sum(&self, k: usize) -> DMatrix<f64> {
        self.sum_over(self.block_range(k))
    }

    /// `Σ_{i<m} f_i ⊗ x_i`.
    pub fn partial_sum(&self, m: usize) -> DMatrix<f64> {
        self.sum_over(0..m)
    }

    pub fn reconstruct(&self, x: &DVector<f64>) -> Result<Reconstruction> {
        let d = self.space.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let mut acc = DVector::zeros(d);
        let mut max_partial = 0.0f64;
        for (xi, fi) in self.vectors.iter().zip(&self.functionals) {
            acc += xi * fi.dot(x);
            max_partial = max_partial.max(self.space.norm_of(acc.as_slice()));
        }
        let error = self.space.norm_of((&acc - x).as_slice());
        Ok(Reconstruction { x_hat: acc, error, max_partial })
    }

    /// The frame with pair `i` removed, block starts shifted accordingly.
    pub fn without_pair(&self, i: usize) -> Result<Self> {
        if i >= self.len() || self.len() == 1 {
            return Err(Error::InvalidParameter(format!("cannot remove pair {i} of {}", self.len())));
        }
        let mut vectors = self.vectors.clone();
        let mut functionals = self.functionals.clone();
        vectors.remove(i);
        functionals.remove(i);
        let mut blocks: Vec<usize> = self.blocks.iter().map(|&b| if b > i { b - 1 } else { b }).collect();
        blocks.dedup();
        blocks.retain(|&b| b < vectors.len());
        SchauderFrame::new(self.space.clone(), vectors, functionals, blocks)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = FrameFile {
            pairs: self
                .vectors
                .iter()
                .zip(&self.functionals)
                .map(|(x, f)| PairFile { x: x.iter().copied().collect(), f: f.iter().copied().collect() })
                .collect(),
            blocks: self.blocks.clone(),
            space: self.space.to_string(),
        };
        serde_json::to_value(file).expect("frame serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let file: FrameFile = serde_json::from_value(v.clone()).map_err(|e| Error::InvalidFrame(e.to_string()))?;
        let space: SpaceSpec = file.space.parse()?;
        let (vectors, functionals) = file
            .pairs
            .into_iter()
            .map(|p| (DVector::from_vec(p.x), DVector::from_vec(p.f)))
            .unzip();
        SchauderFrame::new(space, vectors, functionals, file.blocks)
    }

    fn operator(&self, m: DMatrix<f64>) -> Operator {
        Operator { matrix: m, domain: self.space.clone(), codomain: self.space.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameBound {
    pub value: f64,
    /// Prefix length attaining the value.
    pub prefix: usize,
    pub certified: bool,
}

/// `max_m ‖Σ_{i≤m} f_i ⊗ x_i‖` over every prefix.
pub fn frame_bound(fr: &SchauderFrame, opts: &OpNormOptions) -> FrameBound {
    let prefixes: Vec<DMatrix<f64>> = {
        let d = fr.space.dim();
        let mut acc = DMatrix::zeros(d, d);
        fr.vectors
            .iter()
            .zip(&fr.functionals)
            .map(|(x, f)| {
                acc += x * f.transpose();
                acc.clone()
            })
            .collect()
    };
    let norms: Vec<(f64, bool)> = prefixes
        .into_par_iter()
        .map(|m| {
            let e = op_norm(&fr.operator(m), opts);
            (e.lower, e.certified)
        })
        .collect();
    let mut best = FrameBound { value: 0.0, prefix: 0, certified: true };
    for (i, (v, c)) in norms.into_iter().enumerate() {
        best.certified &= c;
        if v > best.value {
            best.value = v;
            best.prefix = i + 1;
        }
    }
    best
}

/// Sign supremum of the block sums over block prefixes.
pub fn block_unconditional_bound(fr: &SchauderFrame, mode: SignMode, opts: &OpNormOptions) -> Result<SignSup> {
    let blocks: Vec<DMatrix<f64>> = (0..fr.block_count()).map(|k| fr.block_sum(k)).collect();
    sign_supremum(&blocks, &fr.space, &fr.space, mode, true, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisConstantMethod {
    /// One-dimensional range.
    Exact,
    /// Grid search over the range, at most three-dimensional.
    Grid,
    /// `Σ ‖z_j‖ ‖z_j*‖`, valid for any basis.
    Bound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockPlan {
    /// Index of the source difference block.
    pub source: usize,
    pub rank: usize,
    pub basis_constant: f64,
    pub basis_constant_method: BasisConstantMethod,
    pub repeats: usize,
    #[serde(skip)]
    pub inner_basis: Vec<DVector<f64>>,
    #[serde(skip)]
    pub biorthogonals: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DilationPlan {
    pub eps: f64,
    pub lambda: f64,
    /// True when `sign_sup − ε/2` fell below the floor and was raised.
    pub lambda_clipped: bool,
    pub sign_sup: f64,
    pub sign_sup_exhaustive: bool,
    pub blocks: Vec<BlockPlan>,
    /// Source blocks with `A_n = 0`, which contribute no pairs.
    pub skipped: Vec<usize>,
}

impl DilationPlan {
    /// `M_n ≥ 2λ+ε` and `C_n/M_n ≤ ε/(4λ+2ε)` for every block.
    pub fn constraints_hold(&self) -> bool {
        let (l, e) = (self.lambda, self.eps);
        self.blocks.iter().all(|b| {
            let m = b.repeats as f64;
            m >= 2.0 * l + e - 1e-12 && b.basis_constant / m <= e / (4.0 * l + 2.0 * e) + 1e-12
        })
    }
}

/// Column-pivoted Gram–Schmidt: orthonormal basis of the column space.
fn range_basis(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let mut cols: Vec<DVector<f64>> = a.column_iter().map(|c| c.into_owned()).collect();
    let scale = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut q: Vec<DVector<f64>> = Vec::new();
    if scale == 0.0 {
        return q;
    }
    loop {
        let (j, best) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= RANK_TOL * scale.max(1.0) || q.len() == a.nrows() {
            break;
        }
        let mut v = cols[j].clone() / best;
        // second pass for orthogonality
        for u in &q {
            let c = u.dot(&v);
            v -= u * c;
        }
        let v = v.normalize();
        for c in cols.iter_mut() {
            let k = v.dot(c);
            *c -= &v * k;
        }
        q.push(v);
    }
    q
}

/// Largest `‖P_k e‖/‖e‖` over `e` in the span of `z`, `P_k` the partial-sum
/// projection of the basis `z` with biorthogonals `zs` (both in `R^d`).
fn basis_constant(space: &SpaceSpec, z: &[DVector<f64>], zs: &[DVector<f64>]) -> (f64, BasisConstantMethod) {
    let r = z.len();
    let dual = space.dual();
    let bound = {
        let mut acc = 0.0f64;
        let mut best = 1.0f64;
        for (zj, fj) in z.iter().zip(zs) {
            acc += space.norm_of(zj.as_slice()) * dual.norm_of(fj.as_slice());
            best = best.max(acc);
        }
        best
    };
    if r <= 1 {
        return (1.0, BasisConstantMethod::Exact);
    }
    if r > 3 {
        return (bound, BasisConstantMethod::Bound);
    }
    // coefficients on the surface of the cube in R^r
    let g = BASIS_GRID;
    let ticks: Vec<f64> = (0..g).map(|k| -1.0 + 2.0 * k as f64 / (g - 1) as f64).collect();
    let mut best = 1.0f64;
    for face in 0..r {
        let total = g.pow((r - 1) as u32);
        for idx in 0..total {
            let mut c = vec![0.0; r];
            let mut rem = idx;
            for (i, ci) in c.iter_mut().enumerate() {
                if i == face {
                    *ci = 1.0;
                } else {
                    *ci = ticks[rem % g];
                    rem /= g;
                }
            }
            let mut e = DVector::zeros(space.dim());
            for (ci, zi) in c.iter().zip(z) {
                e += zi * *ci;
            }
            let ne = space.norm_of(e.as_slice());
            if ne == 0.0 {
                continue;
            }
            let mut part = DVector::zeros(space.dim());
            for k in 0..r - 1 {
                part += &z[k] * c[k];
                best = best.max(space.norm_of(part.as_slice()) / ne);
            }
        }
    }
    (best.min(bound), BasisConstantMethod::Grid)
}

/// Dilates `seq` into a block unconditional frame whose block `k` sums to
/// the `k`-th difference block.
pub fn dilate_to_frame(
    seq: &ApproximatingSequence,
    eps: f64,
    budget: usize,
    opts: &OpNormOptions,
) -> Result<(SchauderFrame, DilationPlan)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    if !seq.ends_at_identity(1e-10) {
        return Err(Error::InvalidParameter("approximating sequence must end at the identity".into()));
    }
    let space = &seq.space;
    let dual = space.dual();
    let sup = sign_sup(seq, auto_mode(seq.len(), budget, opts.seed), opts)?;
    let floor = (0..seq.len()).map(|n| op_norm(&seq.partial_operator(n), opts).lower).fold(1.0, f64::max);
    let raw = sup.value - eps / 2.0;
    let lambda = raw.max(floor);
    let lambda_clipped = raw < floor;

    let mut vectors = Vec::new();
    let mut functionals = Vec::new();
    let mut starts = Vec::new();
    let mut plans = Vec::new();
    let mut skipped = Vec::new();
    for (n, a) in seq.diffs.iter().enumerate() {
        let q = range_basis(a);
        if q.is_empty() {
            skipped.push(n);
            continue;
        }
        let mut z = Vec::with_capacity(q.len());
        let mut zs = Vec::with_capacity(q.len());
        let mut w = Vec::with_capacity(q.len());
        for qj in &q {
            let s = space.norm_of(qj.as_slice());
            z.push(qj / s);
            zs.push(qj * s);
            w.push(a.transpose() * qj * s);
        }
        let (c, method) = basis_constant(space, &z, &zs);
        let w_max = w.iter().map(|f| dual.norm_of(f.as_slice())).fold(0.0, f64::max);
        let need = (2.0 * lambda + eps).max(c * (4.0 * lambda + 2.0 * eps) / eps).max(w_max);
        let m = ((need - 1e-9).ceil() as usize).max(1);
        starts.push(vectors.len());
        for (zj, wj) in z.iter().zip(&w) {
            for _ in 0..m {
                vectors.push(zj.clone());
                functionals.push(wj / m as f64);
            }
        }
        plans.push(BlockPlan {
            source: n,
            rank: q.len(),
            basis_constant: c,
            basis_constant_method: method,
            repeats: m,
            inner_basis: z,
            biorthogonals: zs,
        });
    }
    let frame = SchauderFrame::new(space.clone(), vectors, functionals, starts)?;
    let plan = DilationPlan {
        eps,
        lambda,
        lambda_clipped,
        sign_sup: sup.value,
        sign_sup_exhaustive: sup.exhaustive,
        blocks: plans,
        skipped,
    };
    Ok((frame, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn opts() -> OpNormOptions {
        OpNormOptions::default()
    }

    fn l2_frame() -> (SchauderFrame, DilationPlan, ApproximatingSequence) {
        let s = SpaceSpec::lp(2.0, 3).unwrap();
        let seq = ApproximatingSequence::canonical(&s).unwrap();
        let (fr, plan) = dilate_to_frame(&seq, 1.0, 256, &opts()).unwrap();
        (fr, plan, seq)
    }

    fn skew_seq() -> ApproximatingSequence {
        let s = SpaceSpec::lp(1.0, 2).unwrap();
        let b = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![1.0, 1.0])];
        ApproximatingSequence::from_basis(&b, &s).unwrap()
    }

    #[test]
    fn canonical_l2_plan() {
        let (fr, plan, _) = l2_frame();
        assert_eq!(plan.lambda, 1.0);
        assert!(plan.lambda_clipped);
        assert!(plan.constraints_hold());
        for b in &plan.blocks {
            assert_eq!((b.rank, b.repeats), (1, 6));
            assert_eq!(b.basis_constant, 1.0);
        }
        assert_eq!(fr.len(), 18);
        assert_eq!(fr.blocks, vec![0, 6, 12]);
        for i in 0..18 {
            let k = i / 6;
            let mut e = DVector::zeros(3);
            e[k] = 1.0;
            assert_abs_diff_eq!(fr.vectors[i], e, epsilon = 1e-15);
            assert_abs_diff_eq!(fr.functionals[i], e / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn blocks_sum_to_differences() {
        for seq in [l2_frame().2, skew_seq()] {
            let (fr, _) = dilate_to_frame(&seq, 0.5, 256, &opts()).unwrap();
            for (k, a) in seq.diffs.iter().enumerate() {
                assert!((fr.block_sum(k) - a).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn eps_must_be_positive() {
        let (_, _, seq) = l2_frame();
        assert!(dilate_to_frame(&seq, 0.0, 256, &opts()).is_err());
        assert!(dilate_to_frame(&seq, -1.0, 256, &opts()).is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let (fr, _, _) = l2_frame();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let r = fr.reconstruct(&x).unwrap();
        assert!(r.error <= 1e-9);
        let z = fr.reconstruct(&DVector::zeros(3)).unwrap();
        assert_eq!(z.x_hat, DVector::zeros(3));
        let cut = fr.without_pair(0).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(cut.reconstruct(&e1).unwrap().error, 1.0 / 6.0, epsilon = 1e-12);
        assert!(fr.reconstruct(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn bound_examples() {
        let s = SpaceSpec::lp(2.0, 1).unwrap();
        let one = SchauderFrame::new(s, vec![DVector::from_element(1, 1.0)], vec![DVector::from_element(1, 1.0)], vec![0]).unwrap();
        assert_abs_diff_eq!(frame_bound(&one, &opts()).value, 1.0, epsilon = 1e-12);
        let single = block_unconditional_bound(&one, SignMode::Exhaustive, &opts()).unwrap();
        assert_abs_diff_eq!(single.value, frame_bound(&one, &opts()).value, epsilon = 1e-12);

        let (fr, plan, _) = l2_frame();
        let fb = frame_bound(&fr, &opts());
        assert_abs_diff_eq!(fb.value, 1.0, epsilon = 1e-12);
        assert!(fb.value <= plan.lambda + plan.eps);
        let bb = block_unconditional_bound(&fr, SignMode::Exhaustive, &opts()).unwrap();
        assert_abs_diff_eq!(bb.value, 1.0, epsilon = 1e-12);

        let (sk, _) = dilate_to_frame(&skew_seq(), 1.0, 256, &opts()).unwrap();
        let bb = block_unconditional_bound(&sk, SignMode::Exhaustive, &opts()).unwrap();
        assert_abs_diff_eq!(bb.value, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn skew_frame_bounds_and_normalization() {
        let seq = skew_seq();
        for eps in [0.5, 1.0] {
            let (fr, plan) = dilate_to_frame(&seq, eps, 256, &opts()).unwrap();
            assert!(!plan.lambda_clipped);
            assert!(plan.constraints_hold());
            assert!(frame_bound(&fr, &opts()).value <= 3.0 + eps + 1e-6);
            let dual = fr.space.dual();
            for (x, f) in fr.vectors.iter().zip(&fr.functionals) {
                assert!((fr.space.norm_of(x.as_slice()) - 1.0).abs() <= 1e-12);
                assert!(dual.norm_of(f.as_slice()) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn skewed_ranges_need_a_larger_inner_basis() {
        let s = SpaceSpec::lp(1.5, 4).unwrap();
        let b: Vec<DVector<f64>> = vec![
            DVector::from_vec(vec![1.0, 0.2, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.3, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0, 0.1]),
            DVector::from_vec(vec![0.1, 0.0, 0.0, 1.0]),
        ];
        let full = ApproximatingSequence::from_basis(&b, &s).unwrap();
        // merge pairs of blocks so every range is two-dimensional
        let seq = ApproximatingSequence::new(s, vec![full.partials[1].clone(), full.partials[3].clone()]).unwrap();
        let (fr, plan) = dilate_to_frame(&seq, 1.0, 256, &opts()).unwrap();
        assert!(plan.blocks.iter().all(|p| p.rank == 2 && p.basis_constant_method == BasisConstantMethod::Grid));
        assert!(plan.constraints_hold());
        for (k, a) in seq.diffs.iter().enumerate() {
            assert!((fr.block_sum(k) - a).amax() <= 1e-12);
        }
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        assert!(fr.reconstruct(&x).unwrap().error <= 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let (fr, _, _) = l2_frame();
        let v = fr.to_json();
        assert_eq!(v["blocks"], serde_json::json!([0, 6, 12]));
        assert_eq!(v["space"], "lp:p=2:n=3");
        let back = SchauderFrame::from_json(&v).unwrap();
        assert_eq!(back, fr);
    }

    #[test]
    fn invalid_frames_are_rejected() {
        let s = SpaceSpec::lp(2.0, 2).unwrap();
        let e = DVector::from_vec(vec![1.0, 0.0]);
        let long = DVector::from_vec(vec![2.0, 0.0]);
        assert!(SchauderFrame::new(s.clone(), vec![long.clone()], vec![e.clone()], vec![0]).is_err());
        assert!(SchauderFrame::new(s.clone(), vec![e.clone()], vec![long], vec![0]).is_err());
        assert!(SchauderFrame::new(s.clone(), vec![e.clone()], vec![e.clone()], vec![1]).is_err());
        assert!(SchauderFrame::new(s, vec![e.clone(), e.clone()], vec![e.clone(), e], vec![0, 0]).is_err());
    }
}

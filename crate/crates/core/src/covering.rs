//! Ball coverings of the unit sphere of an operator space `B(X, Y)`.
//!
//! * [`BcpPoints`] enumerates the candidate centers `2Σ g_i⊗s_i / ‖Σ g_i⊗s_i‖`
//!   drawn from nets in `B_{X*}` and `B_Y`.
//! * [`Coverer`] runs the constructive step for one operator: truncate its
//!   frame expansion at the first block boundary whose partial norm clears the
//!   threshold, snap every factor to the nets, and rescale to norm two.
//! * [`verify_cover`] searches the sphere adversarially for points outside a
//!   given finite family of balls.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::Side;
use crate::frames::{block_unconditional_bound, frame_bound, SchauderFrame};
use crate::opnorm::{op_norm, quotient_seminorm, NormMode, OpNormOptions, Operator};
use crate::rng;
use crate::signs::{SignMode, MAX_EXHAUSTIVE_BLOCKS};
use crate::spaces::{DyadicLattice, FactorNet, SpaceSpec};
use crate::{Error, Result};

/// `B(X, Y)` with a chosen norm.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpace {
    pub domain: SpaceSpec,
    pub codomain: SpaceSpec,
    pub mode: NormMode,
}

/// Value and a subgradient of the mode norm at `m`.
fn norm_with_subgradient(
    mode: &NormMode,
    dom: &SpaceSpec,
    cod: &SpaceSpec,
    m: &DMatrix<f64>,
    opts: &OpNormOptions,
) -> (f64, DMatrix<f64>, bool) {
    let plain = |mat: DMatrix<f64>| {
        let op = Operator { matrix: mat, domain: dom.clone(), codomain: cod.clone() };
        let e = op_norm(&op, opts);
        let nx = dom.norm_of(e.witness.as_slice());
        if e.lower == 0.0 || nx == 0.0 {
            return (e.lower, DMatrix::zeros(cod.dim(), dom.dim()), e.certified);
        }
        let x = &e.witness / nx;
        let y = &op.matrix * &x;
        let g = cod.subgradient(y.as_slice());
        (e.lower, g * x.transpose(), e.certified)
    };
    match mode {
        NormMode::Plain => plain(m.clone()),
        NormMode::Alpha { alpha, tail } => {
            let (v, g, c) = plain(m.clone());
            match tail {
                None => (alpha * v, g * *alpha, c),
                Some(t) => {
                    let mut tm = m.clone();
                    for j in 0..t.cutoff.min(tm.ncols()) {
                        tm.column_mut(j).fill(0.0);
                    }
                    let (q, gq, cq) = plain(tm);
                    (alpha * v + (1.0 - alpha) * q, g * *alpha + gq * (1.0 - alpha), c && cq)
                }
            }
        }
    }
}

impl OperatorSpace {
    pub fn plain(domain: SpaceSpec, codomain: SpaceSpec) -> Self {
        OperatorSpace { domain, codomain, mode: NormMode::Plain }
    }

    pub fn norm(&self, m: &DMatrix<f64>, opts: &OpNormOptions) -> f64 {
        norm_with_subgradient(&self.mode, &self.domain, &self.codomain, m, opts).0
    }

    fn norm_certified(&self, m: &DMatrix<f64>, opts: &OpNormOptions) -> (f64, bool) {
        let (v, _, c) = norm_with_subgradient(&self.mode, &self.domain, &self.codomain, m, opts);
        (v, c)
    }

    fn operator(&self, m: DMatrix<f64>) -> Operator {
        Operator { matrix: m, domain: self.domain.clone(), codomain: self.codomain.clone() }
    }
}

/// Seeded Gaussian operators rescaled to norm one in the space's norm.
pub fn sample_unit_operators(space: &OperatorSpace, count: usize, seed: u64, opts: &OpNormOptions) -> Vec<Operator> {
    let (r, c) = (space.codomain.dim(), space.domain.dim());
    (0..count)
        .map(|i| {
            let mut g = rng::rng(rng::child(seed, i as u64));
            loop {
                let m = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut g));
                let n = space.norm(&m, opts);
                if n > 0.0 {
                    return space.operator(m / n);
                }
            }
        })
        .collect()
}

/// Lazy enumeration of the centers `2Σ_{i≤m} g_i ⊗ s_i / ‖Σ g_i ⊗ s_i‖` for
/// `m ≤ m_max`. Selections are multisets of (functional, vector) pairs, in
/// lexicographic order; selections summing to zero are skipped.
pub struct BcpPoints<'a> {
    functionals: &'a [DVector<f64>],
    vectors: &'a [DVector<f64>],
    domain: SpaceSpec,
    codomain: SpaceSpec,
    m_max: usize,
    current: Vec<usize>,
    opts: OpNormOptions,
    done: bool,
}

pub fn generate_bcp_points<'a>(
    functionals: &'a [DVector<f64>],
    functional_space: &SpaceSpec,
    vectors: &'a [DVector<f64>],
    vector_space: &SpaceSpec,
    m_max: usize,
    opts: &OpNormOptions,
) -> Result<BcpPoints<'a>> {
    if functionals.is_empty() || vectors.is_empty() {
        return Err(Error::InvalidParameter("BCP nets must be nonempty".into()));
    }
    if m_max == 0 {
        return Err(Error::InvalidParameter("m_max must be at least 1".into()));
    }
    let dual = functional_space.dual();
    for f in functionals {
        check_in_ball(functional_space, f)?;
    }
    for v in vectors {
        check_in_ball(vector_space, v)?;
    }
    Ok(BcpPoints {
        functionals,
        vectors,
        domain: dual,
        codomain: vector_space.clone(),
        m_max,
        current: vec![0],
        opts: opts.clone(),
        done: false,
    })
}

fn check_in_ball(s: &SpaceSpec, v: &DVector<f64>) -> Result<()> {
    let n = s.norm(v.as_slice())?;
    if n > 1.0 + 1e-12 {
        return Err(Error::FactorOutsideBall { norm: n });
    }
    Ok(())
}

impl BcpPoints<'_> {
    fn pairs(&self) -> usize {
        self.functionals.len() * self.vectors.len()
    }

    fn advance(&mut self) {
        let p = self.pairs();
        // next nondecreasing sequence of the same length, else grow
        let mut i = self.current.len();
        while i > 0 {
            i -= 1;
            if self.current[i] + 1 < p {
                let v = self.current[i] + 1;
                for slot in &mut self.current[i..] {
                    *slot = v;
                }
                return;
            }
        }
        if self.current.len() < self.m_max {
            self.current = vec![0; self.current.len() + 1];
        } else {
            self.done = true;
        }
    }
}

impl Iterator for BcpPoints<'_> {
    type Item = Operator;

    fn next(&mut self) -> Option<Operator> {
        while !self.done {
            let nb = self.vectors.len();
            let mut sum = DMatrix::zeros(self.codomain.dim(), self.domain.dim());
            for &k in &self.current {
                sum += &self.vectors[k % nb] * self.functionals[k / nb].transpose();
            }
            self.advance();
            let op = Operator { matrix: sum, domain: self.domain.clone(), codomain: self.codomain.clone() };
            let n = op_norm(&op, &self.opts).lower;
            if n > 1e-12 {
                return Some(op.scaled(2.0 / n));
            }
        }
        None
    }
}

/// Parameters of the covering step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverParams {
    /// Surplus `ε` in the `(2 − ε)` hypothesis on the frame side.
    pub eps: f64,
    pub sigma: f64,
    /// Frame slack: the frame's bounds may exceed `2 − ε` by at most this.
    pub eps1: f64,
    pub eps2: f64,
    /// Lattice step for both nets; automatic when absent.
    pub eta: Option<f64>,
}

impl CoverParams {
    /// `ε₁` and `ε₂` at 0.9 of their upper limits.
    pub fn with_defaults(eps: f64, sigma: f64, mode: &NormMode) -> Self {
        let eps2_cap = match mode {
            NormMode::Plain => sigma / 2.0,
            NormMode::Alpha { .. } => sigma / 4.0,
        };
        CoverParams { eps, sigma, eps1: 0.9 * sigma / 2.0, eps2: 0.9 * eps2_cap, eta: None }
    }

    pub fn validate(&self, mode: &NormMode) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let finite = [self.eps, self.sigma, self.eps1, self.eps2].iter().all(|v| v.is_finite());
        if !finite {
            return bad("cover parameters must be finite".into());
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps = {} must lie in (0, 1]", self.eps));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma = {} must be positive", self.sigma));
        }
        if !(self.eps1 > 0.0 && self.eps1 < self.sigma / 2.0) {
            return bad(format!("eps1 = {} must lie in (0, sigma/2)", self.eps1));
        }
        if let Some(h) = self.eta {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("eta = {h} must be positive"));
            }
        }
        match mode {
            NormMode::Plain => {
                if self.sigma >= self.eps {
                    return bad(format!("sigma = {} must be below eps = {}", self.sigma, self.eps));
                }
                if !(self.eps2 > 0.0 && self.eps2 < self.sigma / 2.0) {
                    return bad(format!("eps2 = {} must lie in (0, sigma/2)", self.eps2));
                }
            }
            NormMode::Alpha { alpha, .. } => {
                if !(*alpha > 1.0 - self.eps / 2.0 && *alpha <= 1.0) {
                    return bad(format!("alpha = {alpha} must lie in (1 - eps/2, 1]"));
                }
                if self.sigma >= 2.0 * alpha + self.eps - 2.0 {
                    return bad(format!("sigma = {} must be below 2 alpha + eps - 2", self.sigma));
                }
                if !(self.eps2 > 0.0 && self.eps2 < self.sigma / 4.0) {
                    return bad(format!("eps2 = {} must lie in (0, sigma/4)", self.eps2));
                }
            }
        }
        Ok(())
    }

    /// `2 − ε + σ`, which equals `2α − (2α + ε − 2 − σ)` in the renormed case.
    pub fn bound(&self) -> f64 {
        2.0 - self.eps + self.sigma
    }
}

/// Which branch of `max(|1 − 2/ξ|, 1)` was active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XiBranch {
    /// `ξ ≤ 1`: the max is `2/ξ − 1`.
    AtMostOne,
    /// `ξ > 1`: the max is `1`.
    AboveOne,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverOutcome {
    /// Block boundary index (1-based count of blocks kept).
    pub k0: usize,
    /// Number of frame pairs kept.
    pub pairs: usize,
    pub t_norm: f64,
    pub threshold: f64,
    pub truncated_norm: f64,
    pub tau: f64,
    /// `‖T_{k0} − Σ g ⊗ s‖`.
    pub approximation_error: f64,
    pub xi: f64,
    pub xi_branch: XiBranch,
    pub xi_bracket: (f64, f64),
    pub xi_in_bracket: bool,
    #[serde(skip)]
    pub center: Operator,
    pub center_norm: f64,
    pub distance: f64,
    pub bound: f64,
    pub margin: f64,
    /// Estimate of the first inequality of the chain, with measured terms.
    pub chain_estimate: f64,
    pub certified: bool,
}

/// Measured frame constants, checked once against `2 − ε + ε₁`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameHypothesis {
    pub frame_bound: f64,
    pub block_bound: f64,
    pub limit: f64,
}

/// The constructive covering step for operators sharing one frame.
pub struct Coverer<'a> {
    pub frame: &'a SchauderFrame,
    pub side: Side,
    pub params: CoverParams,
    pub space: OperatorSpace,
    pub hypothesis: FrameHypothesis,
    functional_net: Option<&'a dyn FactorNet>,
    vector_net: Option<&'a dyn FactorNet>,
    opts: OpNormOptions,
}

impl<'a> Coverer<'a> {
    /// Checks the parameters and the frame hypothesis. Without explicit nets
    /// the step uses dyadic lattices fine enough for each run.
    pub fn new(
        frame: &'a SchauderFrame,
        side: Side,
        space: OperatorSpace,
        params: CoverParams,
        opts: &OpNormOptions,
    ) -> Result<Self> {
        params.validate(&space.mode)?;
        let home = match side {
            Side::Codomain => &space.codomain,
            Side::Domain => &space.domain,
        };
        if *home != frame.space {
            return Err(Error::SpaceMismatch(format!(
                "frame lives on {} but the {:?} side is {home}",
                frame.space, side
            )));
        }
        if frame.block_count() > MAX_EXHAUSTIVE_BLOCKS {
            return Err(Error::TooManyBlocks { blocks: frame.block_count(), max: MAX_EXHAUSTIVE_BLOCKS });
        }
        let fb = frame_bound(frame, opts).value;
        let bb = block_unconditional_bound(frame, SignMode::Exhaustive, opts)?.value;
        let limit = 2.0 - params.eps + params.eps1;
        if fb > limit + 1e-9 || bb > limit + 1e-9 {
            return Err(Error::FrameHypothesis(format!(
                "frame bound {fb} and block bound {bb} must not exceed 2 - eps + eps1 = {limit}"
            )));
        }
        Ok(Coverer {
            frame,
            side,
            params,
            space,
            hypothesis: FrameHypothesis { frame_bound: fb, block_bound: bb, limit },
            functional_net: None,
            vector_net: None,
            opts: opts.clone(),
        })
    }

    /// Use explicit nets for `B_{X*}` and `B_Y` instead of lattices.
    pub fn with_nets(mut self, functionals: &'a dyn FactorNet, vectors: &'a dyn FactorNet) -> Result<Self> {
        if *functionals.space() != self.space.domain.dual() || *vectors.space() != self.space.codomain {
            return Err(Error::SpaceMismatch("nets must live on the dual of the domain and on the codomain".into()));
        }
        self.functional_net = Some(functionals);
        self.vector_net = Some(vectors);
        Ok(self)
    }

    /// `k`-th truncation factors: `(functional, vector)` per pair.
    fn factors(&self, t: &Operator, upto: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
        let fr = self.frame;
        (0..upto)
            .map(|i| match self.side {
                Side::Codomain => (t.matrix.transpose() * &fr.functionals[i], fr.vectors[i].clone()),
                Side::Domain => (fr.functionals[i].clone(), &t.matrix * &fr.vectors[i]),
            })
            .collect()
    }

    fn plain_norm(&self, m: DMatrix<f64>) -> (f64, bool) {
        let e = op_norm(&self.space.operator(m), &self.opts);
        (e.lower, e.certified)
    }

    pub fn cover_one(&self, t: &Operator) -> Result<CoverOutcome> {
        if t.domain != self.space.domain || t.codomain != self.space.codomain {
            return Err(Error::SpaceMismatch("operator spaces differ from the cover space".into()));
        }
        let mut certified = true;
        let mode_norm = self.space.norm_certified(&t.matrix, &self.opts);
        if mode_norm.0 == 0.0 {
            return Err(Error::ZeroOperator);
        }
        // the renormed step runs on T / ‖T‖_α
        let t = match self.space.mode {
            NormMode::Plain => t.clone(),
            NormMode::Alpha { .. } => t.scaled(1.0 / mode_norm.0),
        };
        let (t_norm, c0) = self.plain_norm(t.matrix.clone());
        certified &= c0;
        let e2 = self.params.eps2;
        let threshold = (t_norm - e2 / 16.0).max(0.75);

        let fr = self.frame;
        let mut k0 = None;
        let mut best = 0.0f64;
        for k in 0..fr.block_count() {
            let end = fr.block_range(k).end;
            let m = self.truncation(&t, end);
            let (v, c) = self.plain_norm(m);
            certified &= c;
            best = best.max(v);
            if v > threshold {
                k0 = Some((k + 1, end, v));
                break;
            }
        }
        let (k0, pairs, truncated_norm) = k0.ok_or(Error::NoThresholdCrossing { threshold, best })?;

        let tau = (1.0 / (8.0 * pairs as f64)).min(e2 / (64.0 * pairs as f64));
        let lattices;
        let (fnet, vnet): (&dyn FactorNet, &dyn FactorNet) = match (self.functional_net, self.vector_net) {
            (Some(f), Some(v)) => (f, v),
            _ => {
                lattices = match self.params.eta {
                    Some(h) => (
                        DyadicLattice::new(self.space.domain.dual(), h)?,
                        DyadicLattice::new(self.space.codomain.clone(), h)?,
                    ),
                    None => (
                        DyadicLattice::with_radius(self.space.domain.dual(), tau / 2.0)?,
                        DyadicLattice::with_radius(self.space.codomain.clone(), tau / 2.0)?,
                    ),
                };
                (&lattices.0, &lattices.1)
            }
        };
        for net in [fnet, vnet] {
            if let Some(r) = net.covering_radius() {
                if r >= tau {
                    return Err(Error::NetTooCoarse { required: tau, achieved: r });
                }
            }
        }

        let mut approx = DMatrix::zeros(t.codomain.dim(), t.domain.dim());
        for (f, v) in self.factors(&t, pairs) {
            check_in_ball(fnet.space(), &f)?;
            check_in_ball(vnet.space(), &v)?;
            let (g, df) = fnet.nearest(&f)?;
            let (s, dv) = vnet.nearest(&v)?;
            if df >= tau || dv >= tau {
                return Err(Error::NetTooCoarse { required: tau, achieved: df.max(dv) });
            }
            approx += s * g.transpose();
        }
        let (approximation_error, c1) = self.plain_norm(self.truncation(&t, pairs) - &approx);
        let (xi, c2) = self.plain_norm(approx.clone());
        certified &= c1 && c2;
        let center = self.space.operator(approx * (2.0 / xi));
        let (center_norm, c3) = self.space.norm_certified(&center.matrix, &self.opts);
        let (distance, c4) = self.space.norm_certified(&(&t.matrix - &center.matrix), &self.opts);
        certified &= c3 && c4;

        let xi_bracket = ((t_norm - 3.0 * e2 / 32.0).max(0.5), (17.0 / 4.0f64).min(2.0 * t_norm + e2 / 16.0));
        let xi_branch = if xi <= 1.0 { XiBranch::AtMostOne } else { XiBranch::AboveOne };
        let factor = match xi_branch {
            XiBranch::AtMostOne => 2.0 / xi - 1.0,
            XiBranch::AboveOne => 1.0,
        };
        let (alpha, q) = match &self.space.mode {
            NormMode::Plain => (1.0, 0.0),
            NormMode::Alpha { alpha, tail } => (*alpha, quotient_seminorm(&t, tail.as_ref(), &self.opts)?),
        };
        let chain_estimate =
            alpha * (2.0 / xi * approximation_error + self.hypothesis.limit * factor * t_norm) + (1.0 - alpha) * q;
        let bound = self.params.bound();
        Ok(CoverOutcome {
            k0,
            pairs,
            t_norm,
            threshold,
            truncated_norm,
            tau,
            approximation_error,
            xi,
            xi_branch,
            xi_bracket,
            xi_in_bracket: xi > xi_bracket.0 && xi < xi_bracket.1,
            center,
            center_norm,
            distance,
            bound,
            margin: bound - distance,
            chain_estimate,
            certified,
        })
    }

    /// `Σ_{i<end} f_i T ⊗ y_i` or `Σ_{i<end} f_i ⊗ T x_i`.
    fn truncation(&self, t: &Operator, end: usize) -> DMatrix<f64> {
        let partial = self.frame.partial_sum(end);
        match self.side {
            Side::Codomain => partial * &t.matrix,
            Side::Domain => &t.matrix * partial,
        }
    }
}

/// A finite family of balls claimed to cover the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct BallCover {
    pub centers: Vec<Operator>,
    pub radii: Vec<f64>,
    pub claimed_r: f64,
    pub claimed_delta: f64,
    pub norm_mode: NormMode,
}

impl BallCover {
    pub fn new(centers: Vec<Operator>, radii: Vec<f64>, claimed_r: f64, claimed_delta: f64, norm_mode: NormMode) -> Result<Self> {
        if centers.is_empty() || centers.len() != radii.len() {
            return Err(Error::InvalidParameter(format!("{} centers and {} radii", centers.len(), radii.len())));
        }
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("radii must be positive".into()));
        }
        let (d, c) = (&centers[0].domain, &centers[0].codomain);
        if centers.iter().any(|x| x.domain != *d || x.codomain != *c) {
            return Err(Error::SpaceMismatch("centers live in different operator spaces".into()));
        }
        Ok(BallCover { centers, radii, claimed_r, claimed_delta, norm_mode })
    }

    /// Same centers, every radius replaced by `f(r)`.
    pub fn map_radii(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        BallCover::new(
            self.centers.clone(),
            self.radii.iter().map(|r| f(*r)).collect(),
            self.claimed_r,
            self.claimed_delta,
            self.norm_mode.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 512, restarts: 64, iters: 200, seed: 0x636f_7665 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Covered,
    Counterexample,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverCertificate {
    /// `max_T min_n (‖T − c_n‖ − r_n)` over the searched unit operators.
    pub max_min_gap: f64,
    #[serde(serialize_with = "ser_matrix")]
    pub worst_t: DMatrix<f64>,
    pub worst_norm: f64,
    pub samples: usize,
    pub adversarial_iters: usize,
    pub verdict: Verdict,
    pub certified: bool,
    /// `‖c_n‖ > r_n` for every ball.
    pub off_origin: bool,
    /// `‖c_n‖ ≥ r_n + δ` for every ball.
    pub delta_separated: bool,
    /// `r_n ≤ r` for every ball.
    pub radii_within_claim: bool,
    pub center_norms: Vec<f64>,
    pub tolerance: f64,
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

struct Gap {
    value: f64,
    grad: DMatrix<f64>,
    certified: bool,
}

fn gap(space: &OperatorSpace, cover: &BallCover, t: &DMatrix<f64>, opts: &OpNormOptions) -> Gap {
    let mut best: Option<Gap> = None;
    let mut certified = true;
    for (c, r) in cover.centers.iter().zip(&cover.radii) {
        let (v, g, cert) = norm_with_subgradient(&space.mode, &space.domain, &space.codomain, &(t - &c.matrix), opts);
        certified &= cert;
        let val = v - r;
        if best.as_ref().is_none_or(|b| val < b.value) {
            best = Some(Gap { value: val, grad: g, certified: true });
        }
    }
    let mut b = best.expect("nonempty cover");
    b.certified = certified;
    b
}

fn normalize(space: &OperatorSpace, m: DMatrix<f64>, opts: &OpNormOptions) -> Option<DMatrix<f64>> {
    let n = space.norm(&m, opts);
    (n > 0.0 && n.is_finite()).then(|| m / n)
}

/// Ascent on `T ↦ min_n(‖T − c_n‖ − r_n)` over the unit sphere: subgradient
/// steps with backtracking, then a compass polish over single entries.
fn ascend(space: &OperatorSpace, cover: &BallCover, start: DMatrix<f64>, iters: usize, opts: &OpNormOptions) -> (f64, DMatrix<f64>) {
    let mut t = start;
    let mut cur = gap(space, cover, &t, opts);
    let mut step = 0.25;
    for _ in 0..iters {
        let gnorm = cur.grad.norm();
        if gnorm == 0.0 || step < 1e-12 {
            break;
        }
        let cand = normalize(space, &t + &cur.grad * (step / gnorm), opts);
        match cand {
            Some(c) => {
                let g = gap(space, cover, &c, opts);
                if g.value > cur.value {
                    t = c;
                    cur = g;
                    step *= 1.5;
                } else {
                    step *= 0.5;
                }
            }
            None => step *= 0.5,
        }
    }
    let (r, c) = t.shape();
    let mut h = 0.05;
    while h > 1e-10 {
        let mut improved = false;
        for i in 0..r {
            for j in 0..c {
                for s in [1.0, -1.0] {
                    let mut m = t.clone();
                    m[(i, j)] += s * h;
                    if let Some(m) = normalize(space, m, opts) {
                        let v = gap(space, cover, &m, opts).value;
                        if v > cur.value {
                            cur = gap(space, cover, &m, opts);
                            t = m;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    (cur.value, t)
}

/// Adversarial check that the unit sphere of `space` lies in the union of
/// the balls of `cover`.
pub fn verify_cover(
    cover: &BallCover,
    space: &OperatorSpace,
    search: &VerifyOptions,
    opts: &OpNormOptions,
) -> Result<CoverCertificate> {
    if cover.norm_mode != space.mode {
        return Err(Error::ModeMismatch(format!("cover uses {:?}, search space uses {:?}", cover.norm_mode, space.mode)));
    }
    let c0 = &cover.centers[0];
    if c0.domain != space.domain || c0.codomain != space.codomain {
        return Err(Error::SpaceMismatch("cover centers live outside the search space".into()));
    }
    let mut certified = true;
    let mut center_norms = Vec::with_capacity(cover.centers.len());
    for c in &cover.centers {
        let (v, cert) = space.norm_certified(&c.matrix, opts);
        certified &= cert;
        center_norms.push(v);
    }
    let off_origin = center_norms.iter().zip(&cover.radii).all(|(n, r)| n > r);
    let delta_separated = center_norms.iter().zip(&cover.radii).all(|(n, r)| *n >= r + cover.claimed_delta);
    let radii_within_claim = cover.radii.iter().all(|r| *r <= cover.claimed_r);

    let samples = search.samples.max(1);
    let starts = sample_unit_operators(space, samples, search.seed, opts);
    let mut scored: Vec<(f64, usize)> = starts
        .par_iter()
        .map(|t| gap(space, cover, &t.matrix, opts).value)
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let climbs: Vec<(f64, DMatrix<f64>)> = scored
        .iter()
        .take(search.restarts.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(_, i)| ascend(space, cover, starts[i].matrix.clone(), search.iters, opts))
        .collect();
    let mut best = (f64::NEG_INFINITY, DMatrix::zeros(space.codomain.dim(), space.domain.dim()));
    for c in climbs {
        if c.0 > best.0 {
            best = c;
        }
    }
    let worst = gap(space, cover, &best.1, opts);
    let (worst_norm, wcert) = space.norm_certified(&best.1, opts);
    certified &= worst.certified && wcert;
    let tolerance = if certified { 1e-9 } else { 1e-3 * (1.0 + cover.radii.iter().cloned().fold(0.0, f64::max)) };
    let verdict = if worst.value < -tolerance {
        Verdict::Covered
    } else if worst.value > 0.0 && certified && (worst_norm - 1.0).abs() <= 1e-9 {
        Verdict::Counterexample
    } else {
        Verdict::Inconclusive
    };
    Ok(CoverCertificate {
        max_min_gap: worst.value,
        worst_t: best.1,
        worst_norm,
        samples,
        adversarial_iters: search.iters,
        verdict,
        certified,
        off_origin,
        delta_separated,
        radii_within_claim,
        center_norms,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ApproximatingSequence;
    use crate::frames::dilate_to_frame;
    use crate::spaces::UnitNet;
    use approx::assert_abs_diff_eq;

    fn opts() -> OpNormOptions {
        OpNormOptions::default()
    }

    fn sp(s: &str) -> SpaceSpec {
        s.parse().unwrap()
    }

    fn e(n: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn single_pair_nets_give_one_center() {
        let a = vec![e(2, 0)];
        let b = vec![e(2, 0)];
        let pts: Vec<Operator> = generate_bcp_points(&a, &sp("lp:p=2:n=2"), &b, &sp("lp:p=2:n=2"), 1, &opts()).unwrap().collect();
        assert_eq!(pts.len(), 1);
        assert_abs_diff_eq!(pts[0].matrix, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn centers_have_norm_two_and_zero_sums_are_skipped() {
        let a = vec![e(2, 0), -e(2, 0), e(2, 1) * 0.5];
        let b = vec![e(3, 0), e(3, 2) * 0.25];
        let xs = sp("lp:p=1:n=2");
        let ys = sp("lp:p=3:n=3");
        let all: Vec<Operator> = generate_bcp_points(&a, &xs, &b, &ys, 2, &opts()).unwrap().collect();
        // 6 singletons and 21 multisets of size two, minus the 2 zero sums
        assert_eq!(all.len(), 6 + 21 - 2);
        for c in &all {
            assert_abs_diff_eq!(op_norm(c, &opts()).lower, 2.0, epsilon = 1e-9);
            assert_eq!(c.domain, sp("lp:p=inf:n=2"));
        }
    }

    #[test]
    fn points_outside_the_ball_are_rejected() {
        let a = vec![e(2, 0) * 2.0];
        let b = vec![e(2, 0)];
        assert!(generate_bcp_points(&a, &sp("lp:p=2:n=2"), &b, &sp("lp:p=2:n=2"), 1, &opts()).is_err());
    }

    fn l2_frame(n: usize, eps1: f64) -> SchauderFrame {
        let s = SpaceSpec::lp(2.0, n).unwrap();
        let seq = ApproximatingSequence::canonical(&s).unwrap();
        dilate_to_frame(&seq, eps1, 256, &opts()).unwrap().0
    }

    #[test]
    fn explicit_nets_rank_one() {
        // frame from eps1 = 1 has pairs (e_k, e_k*/6)
        let fr = l2_frame(2, 1.0);
        let s = sp("lp:p=2:n=2");
        let t = Operator::rank_one(&e(2, 0), &e(2, 0), s.clone(), s.clone()).unwrap();
        let params = CoverParams { eps: 1.0, sigma: 0.2, eps1: 0.05, eps2: 0.09, eta: None };
        // the eps1 = 1 frame violates the 2 - eps + eps1 hypothesis only if its bounds exceed 1.05
        let fnet = UnitNet::from_points(s.clone(), vec![e(2, 0) / 6.0, DVector::zeros(2)]).unwrap();
        let vnet = UnitNet::from_points(s.clone(), vec![e(2, 0), e(2, 1)]).unwrap();
        let cov = Coverer::new(&fr, Side::Codomain, OperatorSpace::plain(s.clone(), s.clone()), params, &opts())
            .unwrap()
            .with_nets(&fnet, &vnet)
            .unwrap();
        let out = cov.cover_one(&t).unwrap();
        assert_eq!(out.k0, 1);
        assert_eq!(out.pairs, 6);
        assert_abs_diff_eq!(out.xi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.center.matrix, t.matrix.clone() * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.distance, 1.0, epsilon = 1e-12);
        assert!(out.distance < 1.2 && out.xi_in_bracket);
        assert_eq!(out.xi_branch, XiBranch::AtMostOne);

        let alpha = NormMode::Alpha { alpha: 0.9, tail: None };
        let params = CoverParams { eps: 1.0, sigma: 0.2, eps1: 0.05, eps2: 0.045, eta: None };
        let fnet9 = UnitNet::from_points(s.clone(), vec![e(2, 0) / (6.0 * 0.9), DVector::zeros(2)]).unwrap();
        let space = OperatorSpace { domain: s.clone(), codomain: s.clone(), mode: alpha };
        let cov = Coverer::new(&fr, Side::Codomain, space, params, &opts()).unwrap().with_nets(&fnet9, &vnet).unwrap();
        let out = cov.cover_one(&t).unwrap();
        assert!(out.distance < 1.2, "{}", out.distance);
        assert_abs_diff_eq!(out.center_norm, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn small_operator_has_no_crossing() {
        let fr = l2_frame(2, 0.09);
        let s = sp("lp:p=2:n=2");
        let t = Operator::rank_one(&e(2, 0), &e(2, 0), s.clone(), s.clone()).unwrap().scaled(0.5);
        let params = CoverParams::with_defaults(1.0, 0.2, &NormMode::Plain);
        let cov = Coverer::new(&fr, Side::Codomain, OperatorSpace::plain(s.clone(), s), params, &opts()).unwrap();
        assert!(matches!(cov.cover_one(&t), Err(Error::NoThresholdCrossing { .. })));
    }

    #[test]
    fn coarse_lattice_is_reported() {
        let fr = l2_frame(2, 0.09);
        let s = sp("lp:p=2:n=2");
        let t = Operator::identity(s.clone());
        let mut params = CoverParams::with_defaults(1.0, 0.2, &NormMode::Plain);
        params.eta = Some(0.125);
        let cov = Coverer::new(&fr, Side::Codomain, OperatorSpace::plain(s.clone(), s), params, &opts()).unwrap();
        assert!(matches!(cov.cover_one(&t), Err(Error::NetTooCoarse { .. })));
    }

    #[test]
    fn frame_hypothesis_is_checked() {
        let s = SpaceSpec::lp(1.0, 2).unwrap();
        let b = vec![e(2, 0), DVector::from_vec(vec![1.0, 1.0])];
        let seq = ApproximatingSequence::from_basis(&b, &s).unwrap();
        let (fr, _) = dilate_to_frame(&seq, 0.09, 256, &opts()).unwrap();
        let params = CoverParams::with_defaults(1.0, 0.2, &NormMode::Plain);
        assert!(matches!(
            Coverer::new(&fr, Side::Codomain, OperatorSpace::plain(s.clone(), s), params, &opts()),
            Err(Error::FrameHypothesis(_))
        ));
    }

    #[test]
    fn auto_lattice_runs_on_both_sides() {
        let fr = l2_frame(3, 0.09);
        let x = sp("lp:p=2:n=3");
        let y = sp("lp:p=1:n=2");
        for (side, space) in [
            (Side::Domain, OperatorSpace::plain(x.clone(), y.clone())),
            (Side::Codomain, OperatorSpace::plain(y.clone(), x.clone())),
        ] {
            let params = CoverParams::with_defaults(1.0, 0.2, &NormMode::Plain);
            let cov = Coverer::new(&fr, side, space.clone(), params, &opts()).unwrap();
            for t in sample_unit_operators(&space, 10, 5, &opts()) {
                let out = cov.cover_one(&t).unwrap();
                assert_abs_diff_eq!(out.center_norm, 2.0, epsilon = 1e-9);
                assert!(out.distance < out.bound, "{:?}", out);
                assert!(out.xi_in_bracket);
                assert!(out.approximation_error < out.tau * 2.0 * out.pairs as f64);
            }
        }
    }

    #[test]
    fn params_are_validated() {
        let plain = NormMode::Plain;
        assert!(CoverParams::with_defaults(1.0, 0.2, &plain).validate(&plain).is_ok());
        assert!(CoverParams { eps1: 0.1, ..CoverParams::with_defaults(1.0, 0.2, &plain) }.validate(&plain).is_err());
        assert!(CoverParams { eps2: 0.1, ..CoverParams::with_defaults(1.0, 0.2, &plain) }.validate(&plain).is_err());
        assert!(CoverParams::with_defaults(0.1, 0.2, &plain).validate(&plain).is_err());
        let a = NormMode::Alpha { alpha: 0.8, tail: None };
        assert!(CoverParams::with_defaults(1.0, 0.2, &a).validate(&a).is_ok());
        assert!(CoverParams { eps2: 0.06, ..CoverParams::with_defaults(1.0, 0.2, &a) }.validate(&a).is_err());
        let low = NormMode::Alpha { alpha: 0.5, tail: None };
        assert!(CoverParams::with_defaults(1.0, 0.2, &low).validate(&low).is_err());
    }

    fn circle_cover(r: f64) -> (BallCover, OperatorSpace) {
        let x = sp("lp:p=2:n=1");
        let y = sp("lp:p=2:n=2");
        let centers = [(2.0, 0.0), (-2.0, 0.0), (0.0, 2.0), (0.0, -2.0)]
            .iter()
            .map(|&(a, b)| Operator::new(DMatrix::from_column_slice(2, 1, &[a, b]), x.clone(), y.clone()).unwrap())
            .collect();
        (BallCover::new(centers, vec![r; 4], r, 0.1, NormMode::Plain).unwrap(), OperatorSpace::plain(x, y))
    }

    /// Independent: min distance to the four centers on a fine angular grid.
    fn circle_oracle(r: f64) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..200_000 {
            let th = k as f64 * std::f64::consts::TAU / 200_000.0;
            let (c, s) = (th.cos(), th.sin());
            let d = [(2.0, 0.0), (-2.0, 0.0), (0.0, 2.0), (0.0, -2.0)]
                .iter()
                .map(|(a, b): &(f64, f64)| ((c - a).powi(2) + (s - b).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d - r > best.0 {
                best = (d - r, th);
            }
        }
        best
    }

    #[test]
    fn circle_instance() {
        let vo = VerifyOptions { samples: 64, restarts: 8, iters: 100, seed: 1 };
        let (cov, space) = circle_cover(1.5);
        let cert = verify_cover(&cov, &space, &vo, &opts()).unwrap();
        assert_eq!(cert.verdict, Verdict::Covered);
        let oracle = circle_oracle(1.5).0;
        assert_abs_diff_eq!(oracle, (5.0 - 2.0 * 2f64.sqrt()).sqrt() - 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(cert.max_min_gap, oracle, epsilon = 1e-8);
        assert!(cert.off_origin && cert.delta_separated);

        let (cov, space) = circle_cover(1.4);
        let cert = verify_cover(&cov, &space, &vo, &opts()).unwrap();
        assert_eq!(cert.verdict, Verdict::Counterexample);
        assert_abs_diff_eq!(cert.max_min_gap, (5.0 - 2.0 * 2f64.sqrt()).sqrt() - 1.4, epsilon = 1e-8);
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(cert.worst_t[0].abs(), h, epsilon = 1e-3);
        assert_abs_diff_eq!(cert.worst_t[1].abs(), h, epsilon = 1e-3);
    }

    #[test]
    fn big_ball_covers() {
        let s = sp("lp:p=2:n=2");
        let c = Operator::rank_one(&e(2, 0), &e(2, 0), s.clone(), s.clone()).unwrap().scaled(2.0);
        let cov = BallCover::new(vec![c], vec![3.1], 3.1, 0.0, NormMode::Plain).unwrap();
        let vo = VerifyOptions { samples: 32, restarts: 4, iters: 50, seed: 2 };
        let cert = verify_cover(&cov, &OperatorSpace::plain(s.clone(), s), &vo, &opts()).unwrap();
        assert_eq!(cert.verdict, Verdict::Covered);
        // the ball contains the origin: not a legitimate ball covering
        assert!(!cert.off_origin);
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let (cov, space) = circle_cover(1.5);
        let alpha = OperatorSpace { mode: NormMode::Alpha { alpha: 0.9, tail: None }, ..space };
        assert!(matches!(
            verify_cover(&cov, &alpha, &VerifyOptions::default(), &opts()),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn larger_radii_never_lose_coverage() {
        let vo = VerifyOptions { samples: 32, restarts: 4, iters: 50, seed: 3 };
        let mut last = Verdict::Counterexample;
        for r in [1.3, 1.4, 1.45, 1.47, 1.48, 1.5, 1.7] {
            let (cov, space) = circle_cover(r);
            let v = verify_cover(&cov, &space, &vo, &opts()).unwrap().verdict;
            if last == Verdict::Covered {
                assert_ne!(v, Verdict::Counterexample);
            }
            last = v;
        }
        assert_eq!(last, Verdict::Covered);
    }
}

//! Approximating sequences `S_1, …, S_N` with `S_m S_n = S_n` for `n < m`,
//! their difference blocks `A_n = S_n − S_{n−1}`, and the constants read off
//! from them: basis constant, unconditional constant, sign supremum and
//! reflection defects `‖id − ρS_n‖`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::opnorm::{op_norm, NormEstimate, OpNormOptions, Operator};
use crate::signs::{sign_supremum, SignMode, SignSup};
use crate::spaces::SpaceSpec;
use crate::{Error, Result};

/// Nesting defects above this abort construction.
const NESTING_TOL: f64 = 1e-10;
/// Reciprocal condition number below which a basis counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximatingSequence {
    pub space: SpaceSpec,
    pub partials: Vec<DMatrix<f64>>,
    pub diffs: Vec<DMatrix<f64>>,
    pub ranks: Vec<usize>,
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-10 * top.max(1.0)).count()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

impl ApproximatingSequence {
    /// Validates `S_m S_n = S_n` for all `n < m`.
    pub fn new(space: SpaceSpec, partials: Vec<DMatrix<f64>>) -> Result<Self> {
        space.validate()?;
        let d = space.dim();
        if partials.is_empty() {
            return Err(Error::InvalidParameter("approximating sequence needs at least one operator".into()));
        }
        for s in &partials {
            if s.nrows() != d || s.ncols() != d {
                return Err(Error::ShapeMismatch { rows: s.nrows(), cols: s.ncols(), cod_dim: d, dom_dim: d });
            }
        }
        let seq = Self::assemble(space, partials);
        let defect = seq.nesting_defect();
        if defect > NESTING_TOL {
            return Err(Error::NotNested { defect });
        }
        Ok(seq)
    }

    fn assemble(space: SpaceSpec, partials: Vec<DMatrix<f64>>) -> Self {
        let d = space.dim();
        let mut diffs = Vec::with_capacity(partials.len());
        let mut prev = DMatrix::zeros(d, d);
        for s in &partials {
            diffs.push(s - &prev);
            prev = s.clone();
        }
        let ranks = partials.iter().map(numerical_rank).collect();
        ApproximatingSequence { space, partials, diffs, ranks }
    }

    /// Partial-sum projections of a basis: `S_n = Σ_{j≤n} b_j* ⊗ b_j`.
    pub fn from_basis(basis: &[DVector<f64>], space: &SpaceSpec) -> Result<Self> {
        space.validate()?;
        let d = space.dim();
        if basis.len() != d {
            return Err(Error::InvalidParameter(format!(
                "basis has {} vectors but the space has dimension {d}",
                basis.len()
            )));
        }
        for b in basis {
            if b.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: b.len() });
            }
        }
        let b = DMatrix::from_columns(basis);
        let sv = b.clone().svd(false, false).singular_values;
        let top = sv.iter().cloned().fold(0.0, f64::max);
        let bottom = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let rcond = if top > 0.0 { bottom / top } else { 0.0 };
        if !(rcond > SINGULAR_RCOND) {
            return Err(Error::SingularBasis { rcond });
        }
        let inv = b.clone().try_inverse().ok_or(Error::SingularBasis { rcond })?;
        let partials = (1..=d)
            .map(|n| b.columns(0, n) * inv.rows(0, n))
            .collect();
        ApproximatingSequence::new(space.clone(), partials)
    }

    /// Coordinate projections `P_n`.
    pub fn canonical(space: &SpaceSpec) -> Result<Self> {
        let d = space.dim();
        let basis: Vec<DVector<f64>> = (0..d)
            .map(|j| DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        Self::from_basis(&basis, space)
    }

    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }

    /// `max_{n<m} max|S_m S_n − S_n|` (entrywise).
    pub fn nesting_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (n, sn) in self.partials.iter().enumerate() {
            for sm in &self.partials[n + 1..] {
                worst = worst.max(max_abs(&(sm * sn - sn)));
            }
        }
        worst
    }

    /// Whether `S_m S_n = S_n S_m` for all pairs.
    pub fn commuting(&self) -> bool {
        self.partials.iter().enumerate().all(|(n, sn)| {
            self.partials[n + 1..].iter().all(|sm| max_abs(&(sm * sn - sn * sm)) <= NESTING_TOL)
        })
    }

    /// Whether the last operator is the identity.
    pub fn ends_at_identity(&self, tol: f64) -> bool {
        let d = self.space.dim();
        self.partials.last().is_some_and(|s| max_abs(&(s - DMatrix::identity(d, d))) <= tol)
    }

    pub fn partial_operator(&self, n: usize) -> Operator {
        Operator { matrix: self.partials[n].clone(), domain: self.space.clone(), codomain: self.space.clone() }
    }
}

/// Sign supremum of the difference blocks over prefixes and patterns.
pub fn sign_sup(seq: &ApproximatingSequence, mode: SignMode, opts: &OpNormOptions) -> Result<SignSup> {
    sign_supremum(&seq.diffs, &seq.space, &seq.space, mode, true, opts)
}

/// Exhaustive when the sequence is short enough, randomized otherwise.
pub fn auto_mode(blocks: usize, budget: usize, seed: u64) -> SignMode {
    if blocks <= crate::signs::MAX_EXHAUSTIVE_BLOCKS {
        SignMode::Exhaustive
    } else {
        SignMode::Randomized { budget, seed }
    }
}

/// `‖id − ρS_n‖` for every n.
pub fn reflection_defect(seq: &ApproximatingSequence, rho: f64, opts: &OpNormOptions) -> Vec<NormEstimate> {
    let d = seq.space.dim();
    seq.partials
        .iter()
        .map(|s| {
            let m = DMatrix::identity(d, d) - s * rho;
            op_norm(&Operator { matrix: m, domain: seq.space.clone(), codomain: seq.space.clone() }, opts)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplierCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `‖Σ a_n A_n‖ ≤ max|a_n| · sign_sup`.
pub fn multiplier_bound_check(
    seq: &ApproximatingSequence,
    a: &[f64],
    mode: SignMode,
    opts: &OpNormOptions,
) -> Result<MultiplierCheck> {
    if a.len() != seq.len() {
        return Err(Error::DimensionMismatch { expected: seq.len(), found: a.len() });
    }
    let d = seq.space.dim();
    let mut m = DMatrix::zeros(d, d);
    for (c, block) in a.iter().zip(&seq.diffs) {
        m += block * *c;
    }
    let lhs = op_norm(&Operator { matrix: m, domain: seq.space.clone(), codomain: seq.space.clone() }, opts).lower;
    let amax = a.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    let rhs = amax * sign_sup(seq, mode, opts)?.value;
    Ok(MultiplierCheck { lhs, rhs, pass: lhs <= rhs + 1e-8 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReflectionEntry {
    pub rho: f64,
    /// `max_n ‖id − ρS_n‖`.
    pub max_defect: f64,
    pub per_n: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsReport {
    /// `max_n ‖S_n‖`.
    pub bc: f64,
    /// Supremum over full-length sign patterns.
    pub ubc: f64,
    /// Supremum over patterns and prefixes.
    pub sign_sup: f64,
    pub reflection: Vec<ReflectionEntry>,
    pub exhaustive: bool,
    pub certified: bool,
    pub commuting: bool,
    pub ranks: Vec<usize>,
    /// Violated inequalities.
    pub findings: Vec<String>,
    pub notes: Vec<String>,
}

/// Builds the sequence of `basis` and collects its constants.
pub fn constants_report(
    basis: &[DVector<f64>],
    space: &SpaceSpec,
    rhos: &[f64],
    budget: usize,
    opts: &OpNormOptions,
) -> Result<ConstantsReport> {
    let seq = ApproximatingSequence::from_basis(basis, space)?;
    constants_of(&seq, rhos, budget, opts)
}

pub fn constants_of(
    seq: &ApproximatingSequence,
    rhos: &[f64],
    budget: usize,
    opts: &OpNormOptions,
) -> Result<ConstantsReport> {
    let mut certified = true;
    let mut bc = 0.0f64;
    for n in 0..seq.len() {
        let e = op_norm(&seq.partial_operator(n), opts);
        certified &= e.certified;
        bc = bc.max(e.lower);
    }
    let mode = auto_mode(seq.len(), budget, opts.seed);
    let full = sign_supremum(&seq.diffs, &seq.space, &seq.space, mode, false, opts)?;
    let sup = sign_sup(seq, mode, opts)?;
    certified &= full.certified && sup.certified;

    let reflection = rhos
        .iter()
        .map(|&rho| {
            let per: Vec<NormEstimate> = reflection_defect(seq, rho, opts);
            certified &= per.iter().all(|e| e.certified);
            let per_n: Vec<f64> = per.iter().map(|e| e.lower).collect();
            ReflectionEntry { rho, max_defect: per_n.iter().cloned().fold(0.0, f64::max), per_n }
        })
        .collect::<Vec<_>>();

    let mut findings = Vec::new();
    if bc > (1.0 + full.value) / 2.0 + 1e-8 {
        findings.push(format!("bc = {bc} exceeds (1 + ubc)/2 = {}", (1.0 + full.value) / 2.0));
    }
    if bc > sup.value + 1e-8 {
        findings.push(format!("bc = {bc} exceeds sign_sup = {}", sup.value));
    }
    let mut notes = Vec::new();
    if !full.exhaustive {
        notes.push(format!("sign enumeration randomized over {} patterns; ubc and sign_sup are lower bounds", budget));
    }
    if let Some(r2) = reflection.iter().find(|r| r.rho == 2.0) {
        if r2.max_defect > sup.value + 1e-6 {
            findings.push(format!("reflection defect {} exceeds sign_sup {}", r2.max_defect, sup.value));
        }
    }
    Ok(ConstantsReport {
        bc,
        ubc: full.value,
        sign_sup: sup.value,
        reflection,
        exhaustive: full.exhaustive && sup.exhaustive,
        certified,
        commuting: seq.commuting(),
        ranks: seq.ranks.clone(),
        findings,
        notes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Domain,
    Codomain,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UbapEstimate {
    /// `sign_sup({A_n T} or {T A_n}) / ‖T‖`.
    pub estimate: f64,
    pub norm: f64,
    pub sign_sup: f64,
    pub exhaustive: bool,
    pub eps: f64,
    /// `estimate ≤ 2 − ε`.
    pub in_class: bool,
}

/// Operator-level UBAP estimate of `T/‖T‖` from a sequence on one side.
pub fn operator_ubap_estimate(
    t: &Operator,
    side: Side,
    seq: &ApproximatingSequence,
    eps: f64,
    budget: usize,
    opts: &OpNormOptions,
) -> Result<UbapEstimate> {
    let home = match side {
        Side::Domain => &t.domain,
        Side::Codomain => &t.codomain,
    };
    if *home != seq.space {
        return Err(Error::SpaceMismatch(format!(
            "sequence lives on {} but the operator's {:?} side is {home}",
            seq.space, side
        )));
    }
    if t.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let norm = op_norm(t, opts).lower;
    let blocks: Vec<DMatrix<f64>> = seq
        .diffs
        .iter()
        .map(|a| match side {
            Side::Codomain => a * &t.matrix,
            Side::Domain => &t.matrix * a,
        })
        .collect();
    let mode = auto_mode(blocks.len(), budget, opts.seed);
    let s = sign_supremum(&blocks, &t.domain, &t.codomain, mode, true, opts)?;
    let estimate = s.value / norm;
    Ok(UbapEstimate { estimate, norm, sign_sup: s.value, exhaustive: s.exhaustive, eps, in_class: estimate <= 2.0 - eps })
}

//! Sign suprema `sup_{N, θ} ‖Σ_{k≤N} θ_k B_k‖` over a finite block list.
//!
//! Shared by the UBAP constants of approximating sequences, the block
//! unconditional bound of frames and the operator-level UBAP estimate.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::opnorm::{op_norm, OpNormOptions, Operator};
use crate::rng;
use crate::spaces::SpaceSpec;
use crate::{Error, Result};

/// Largest block count enumerated exhaustively (`2^20` patterns).
pub const MAX_EXHAUSTIVE_BLOCKS: usize = 20;

const CHUNK_BITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignMode {
    Exhaustive,
    /// `budget` seeded random (prefix, pattern) draws; a lower bound.
    Randomized { budget: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignSup {
    pub value: f64,
    pub exhaustive: bool,
    /// Exhaustive and every norm came from a closed form.
    pub certified: bool,
    /// Maximizing signs, one per block of the maximizing prefix.
    pub pattern: Vec<i8>,
    pub patterns_checked: u64,
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    len: usize,
    mask: u64,
    certified: bool,
}

fn better(a: Best, b: Best) -> Best {
    if b.value > a.value {
        Best { certified: a.certified && b.certified, ..b }
    } else {
        Best { certified: a.certified && b.certified, ..a }
    }
}

fn pattern_of(len: usize, mask: u64) -> Vec<i8> {
    (0..len).map(|i| if i > 0 && (mask >> (i - 1)) & 1 == 1 { -1 } else { 1 }).collect()
}

/// Sign supremum of `blocks` as operators `dom → cod`.
///
/// With `prefixes` the supremum also runs over every prefix length
/// `N' ≤ N`; otherwise only full-length patterns are used. The first sign is
/// fixed to `+1` (norms are even).
pub fn sign_supremum(
    blocks: &[DMatrix<f64>],
    dom: &SpaceSpec,
    cod: &SpaceSpec,
    mode: SignMode,
    prefixes: bool,
    opts: &OpNormOptions,
) -> Result<SignSup> {
    let n = blocks.len();
    if n == 0 {
        return Ok(SignSup { value: 0.0, exhaustive: true, certified: true, pattern: vec![], patterns_checked: 0 });
    }
    for b in blocks {
        if b.nrows() != cod.dim() || b.ncols() != dom.dim() {
            return Err(Error::ShapeMismatch { rows: b.nrows(), cols: b.ncols(), cod_dim: cod.dim(), dom_dim: dom.dim() });
        }
    }
    let norm = |m: DMatrix<f64>| {
        let op = Operator { matrix: m, domain: dom.clone(), codomain: cod.clone() };
        let e = op_norm(&op, opts);
        (e.lower, e.certified)
    };
    let lengths: Vec<usize> = if prefixes { (1..=n).collect() } else { vec![n] };

    match mode {
        SignMode::Exhaustive => {
            if n > MAX_EXHAUSTIVE_BLOCKS {
                return Err(Error::TooManyBlocks { blocks: n, max: MAX_EXHAUSTIVE_BLOCKS });
            }
            let mut best = Best { value: f64::NEG_INFINITY, len: 0, mask: 0, certified: true };
            let mut checked = 0u64;
            for &len in &lengths {
                let free = len - 1;
                let chunk_bits = free.min(CHUNK_BITS);
                let chunks = 1u64 << (free - chunk_bits);
                let per_chunk = 1u64 << chunk_bits;
                let results: Vec<Best> = (0..chunks)
                    .into_par_iter()
                    .map(|c| {
                        // high bits fixed by the chunk, low bits walked in Gray order
                        let high = c << chunk_bits;
                        let mut mask = high;
                        let mut sum = DMatrix::zeros(cod.dim(), dom.dim());
                        for (i, b) in blocks.iter().take(len).enumerate() {
                            let neg = i > 0 && (mask >> (i - 1)) & 1 == 1;
                            if neg {
                                sum -= b;
                            } else {
                                sum += b;
                            }
                        }
                        let (v, cert) = norm(sum.clone());
                        let mut local = Best { value: v, len, mask, certified: cert };
                        for k in 1..per_chunk {
                            let bit = k.trailing_zeros() as usize;
                            let flip = 1u64 << bit;
                            let block = &blocks[bit + 1];
                            if mask & flip == 0 {
                                sum -= block * 2.0;
                            } else {
                                sum += block * 2.0;
                            }
                            mask ^= flip;
                            let (v, cert) = norm(sum.clone());
                            local = better(local, Best { value: v, len, mask, certified: cert });
                        }
                        local
                    })
                    .collect();
                for r in results {
                    best = better(best, r);
                }
                checked += 1u64 << free;
            }
            Ok(SignSup {
                value: best.value,
                exhaustive: true,
                certified: best.certified,
                pattern: pattern_of(best.len, best.mask),
                patterns_checked: checked,
            })
        }
        SignMode::Randomized { budget, seed } => {
            let mut r = rng::rng(seed);
            let mut best = Best { value: f64::NEG_INFINITY, len: 0, mask: 0, certified: false };
            for _ in 0..budget.max(1) {
                let len = lengths[r.random_range(0..lengths.len())];
                let mask: u64 = if len > 1 { r.random::<u64>() & ((1u64 << (len - 1).min(63)) - 1) } else { 0 };
                let mut sum = DMatrix::zeros(cod.dim(), dom.dim());
                for (i, b) in blocks.iter().take(len).enumerate() {
                    if i > 0 && (mask >> (i - 1)) & 1 == 1 {
                        sum -= b;
                    } else {
                        sum += b;
                    }
                }
                let (v, _) = norm(sum);
                best = better(best, Best { value: v, len, mask, certified: false });
            }
            Ok(SignSup {
                value: best.value,
                exhaustive: false,
                certified: false,
                pattern: pattern_of(best.len, best.mask),
                patterns_checked: budget.max(1) as u64,
            })
        }
    }
}

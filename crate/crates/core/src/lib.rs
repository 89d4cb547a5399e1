//! Desk-scale numerics for Schauder frames, unconditional approximation
//! constants and uniform ball coverings of operator spaces.
//!
//! Everything lives on finite-dimensional ℓ_p-type spaces ([`spaces`]).
//! Operators are dense matrices tagged with domain and codomain
//! ([`opnorm::Operator`]); induced norms come with witnesses so that every
//! reported lower bound can be replayed.
//!
//! Module map:
//!
//! * [`spaces`] – space descriptors, norms, duality, sphere sampling, nets.
//! * [`opnorm`] – induced `p→q` norms, the tail surrogate and the α-renorm.
//! * [`approx`] – approximating sequences, sign suprema, reflection defects.
//! * [`frames`] – Schauder frames and the dilation of an approximating
//!   sequence into a block unconditional frame.
//! * [`dilation`] – the dilation space built on a frame and the maps into
//!   and out of it.
//! * [`covering`] – BCP points, the constructive covering step, and
//!   adversarial cover verification.
//! * [`bip`] – ball intersection feasibility and dual reflection defects.

pub mod approx;
pub mod bip;
pub mod covering;
pub mod dilation;
mod error;
pub mod frames;
pub mod opnorm;
pub mod rng;
mod search;
pub mod signs;
pub mod spaces;

pub use error::{Error, Result};

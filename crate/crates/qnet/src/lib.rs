//! Constructive synthesis of quantized ReLU networks with exact verification.
//!
//! A quantized ReLU network draws every weight from a finite codebook of
//! `lambda` rational values, so a stored weight is just an index of
//! `ceil(log2 lambda)` bits. This crate builds such networks explicitly:
//!
//! - [`network`] -- the layered intermediate representation, exact rational
//!   and `f64` evaluation, structural validation, and complexity accounting
//!   (depth / width / weight count / memory bits).
//! - [`gadgets`] -- primitive sub-network constructors: the tent map,
//!   piecewise-linear squaring, absolute value, an approximate multiplier,
//!   radix-cascade weight gadgets (nonlinear and linear codebooks), and
//!   trapezoid bump blocks.
//! - [`synth`] -- end-to-end synthesizers: a function-independent builder
//!   (local Taylor polynomials glued by a partition of unity) and a
//!   function-dependent builder for Lipschitz-1 functions on `[0,1]`
//!   (breakpoint transform + interpolation, optionally with cached residual
//!   functions).
//! - [`bounds`] -- closed-form complexity bound evaluators, the memory model
//!   `M(lambda)` and its unique minimizer (the bound-based optimal
//!   bit-width), and overhead ratios against unquantized networks.
//! - [`verify`] -- grid sup-norm certification, an independent
//!   piecewise-linear oracle, and a seeded property suite.
//! - [`target`] -- target function registry with exact derivative oracles.

pub mod assemble;
pub mod bounds;
pub mod codebook;
pub mod gadgets;
pub mod json;
pub mod network;
pub mod rational;
pub mod synth;
pub mod target;
pub mod verify;

pub use codebook::{QuantMode, WeightCodebook};
pub use network::{
    Activation, ComplexityReport, Edge, Layer, NetError, QuantizedNetwork, Unit, Violation,
};
pub use rational::Rat;
pub use target::TargetFunction;

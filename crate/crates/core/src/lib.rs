//! Simulator for residue-number-system photonic GEMM accelerators.
//!
//! Integer arithmetic is carried out modulo a small set of co-prime moduli,
//! each modular multiply-accumulate is mapped onto optical phase, and
//! floating-point tensors reach that integer datapath through block
//! floating point. On top of the bit-exact engine sit a small training
//! harness and an analytical latency / energy / area model.

pub mod bfp;
pub mod cli;
pub mod config;
pub mod error;
pub mod gemm;
pub mod perf;
pub mod photonic;
pub mod report;
pub mod rns;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

//! One-dimensional tensor network toolkit.
//!
//! The crate provides labeled dense tensors ([`tensor::Tensor`]), matrix
//! product states and operators, ground-state search (DMRG), real- and
//! imaginary-time evolution (TEBD), transfer-operator correlation analysis for
//! uniform chains, entanglement diagnostics, an exact-diagonalization oracle
//! for cross-checking every approximate method at small sizes, and a
//! continuous-MPS module with a controlled lattice discretization.
//!
//! Conventions used throughout:
//! - tensor legs are addressed by string label, data is row-major over the
//!   declared label order;
//! - entropies are reported in bits (log base 2); correlation lengths use the
//!   natural logarithm;
//! - MPS site tensors carry legs `("vl", "p", "vr")`, MPO site tensors
//!   `("wl", "po", "pi", "wr")`.

pub mod dmrg;

pub mod ed;

pub mod error;

pub mod expect;

pub mod fixtures;

pub mod model;

pub mod mpo;

pub mod mps;

pub mod tebd;

pub mod tensor;

mod linalg;

pub use error::{Error, Result};

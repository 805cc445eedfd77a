//! Small-amplitude standing waves of the focusing nonlinear Schrödinger
//! equation `i u_t + Δu + |u|^p u = 0` on the 2π-periodic torus.
//!
//! The crate builds the waves (closed-form small-amplitude expansions plus a
//! bordered Newton continuation), assembles the linearization about them, and
//! decides spectral stability along two independent routes: the Hamiltonian
//! Krein index count (`krein`) and a direct eigen-solve of `JL` (`jl`). A
//! constrained minimizer and a split-step time integrator act as further
//! independent oracles.

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod continuation;
pub mod error;
pub mod evolution;
pub mod io;
pub mod jl;
pub mod krein;
pub mod minimizer;
pub mod operators;
pub mod par;
pub mod spectral;
pub mod stokes;

pub use error::{Error, Result};
pub use spectral::{Sector, SpectralField, TorusGrid};
pub use stokes::BranchKind;

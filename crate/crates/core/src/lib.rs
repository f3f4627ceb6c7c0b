//! Matching of vector sets embedded in a common input space.
//!
//! A "set" is a finite collection of `D`-dimensional observation vectors
//! (one set = one observation sequence of one class under one acquisition
//! condition). This crate provides four set similarity measures:
//!
//! * classical CCA: principal angles between PCA subspaces ([`cca`]),
//! * constrained CCA: the same, preceded by a projection onto a
//!   discriminative constraint subspace ([`cca`]),
//! * extended CCA: a parameter-free similarity built from covariance
//!   square roots ([`ecca`]),
//! * discriminative extended CCA: extended CCA with a scatter-trained
//!   weighting operator inserted between the deviation operators
//!   ([`decca`]),
//!
//! plus a one-to-many recognition harness with a synthetic corpus
//! generator ([`eval`]).

pub mod cca;
pub mod decca;
pub mod ecca;
pub mod error;
pub mod eval;
pub mod matrixkit;
pub mod setcore;

pub use error::{Error, Result};
pub use matrixkit::{SymmetricSpectrum, DEFAULT_RANK_TOL};
pub use setcore::{SetSpectrum, SubspaceBasis, VectorSet};

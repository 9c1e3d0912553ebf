//! Stable unitarily invariant ensembles of Hermitian random matrices.
//!
//! The crate samples heavy-tailed invariant ensembles, evaluates their
//! characteristic functions in matrix, diagonal and eigenvalue form, and runs
//! the limit-theorem and tail diagnostics that describe their domains of
//! attraction. Every random quantity is drawn from a counter-based substream
//! (see [`rng`]) so results never depend on thread scheduling.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charfn;
pub mod ensembles;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stable1d;
pub mod stats;

pub use error::{Error, Result};

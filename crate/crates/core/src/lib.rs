//! Storage, magnetic dephasing and retrieval of transverse optical patterns
//! in a cold-atom memory.
//!
//! The pipeline runs object plane → Fraunhofer transform into the atomic
//! ensemble → per-point Larmor evolution of the stored spin waves → second
//! Fourier transform onto the camera. [`scenario`] wires the stages together
//! from a config file; the other modules are usable on their own.

// Guards of the form `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angmom;
pub mod constants;
pub mod error;
pub mod fields;
pub mod imageio;
pub mod optics;
pub mod spinwave;
pub mod metrics;
pub mod fit;
pub mod scenario;

pub use error::{Error, Result};

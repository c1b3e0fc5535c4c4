//! Numerical laboratory for optimal Sobolev constants on model closed
//! manifolds and for the stability of the associated sharp inequalities.
//!
//! The manifolds are the round sphere `S^d` (radial functions) and the
//! product `S^1(1/√(d-2)) × S^{d-1}` (circle-dependent functions), both
//! reduced to one-dimensional weighted problems and discretized spectrally.

pub mod constants;
pub mod discretization;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod io;
pub mod optimize;
pub mod quadrature;
pub mod reproduce;
pub mod rng;
pub mod stability;

pub use discretization::{DiscreteFunction, Discretization, SpectralData};
pub use error::{LabError, Result};
pub use functionals::QuotientSpec;
pub use geometry::{ManifoldModel, ModelKind};

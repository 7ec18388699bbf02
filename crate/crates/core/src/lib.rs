//! Characteristic-tracing solver for linear Boltzmann transport on strictly
//! convex domains, with a verification harness for the regularity theory of
//! the problem (escape-time geometry, accretivity, support preservation and
//! compatibility conditions).

pub mod attenuation;
pub mod csda;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod norms;
pub mod quadrature;
pub mod scattering;
pub mod scenario;
pub mod surface;

pub use error::{Error, Result};

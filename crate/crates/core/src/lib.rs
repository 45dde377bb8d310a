//! Nearest-neighbor spacing statistics for spectra that are both partially
//! chaotic (Brody parameter `q`) and incomplete (observed fraction `f`).
//!
//! The crate covers the whole pipeline: beta-Hermite spectra and their
//! unfolding ([`ensemble`]), spacing histograms ([`stats`]), the composite
//! two-parameter spacing density ([`model`]), the Monte Carlo variance table
//! it depends on ([`calibration`]) and least-squares estimation of `(q, f)`
//! ([`fit`]).

pub mod calibration;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod quad;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

//! Photon-number assignment for arrival-time histograms of
//! superconducting nanowire detectors.
//!
//! The crate covers the whole analysis chain: analytic peak shapes
//! ([`distributions`]), timestamp pairing and binning ([`histogram`],
//! [`timestamps`]), mixture fitting ([`fitting`]), region construction and
//! error probabilities ([`assignment`]), detector tomography
//! ([`tomography`]), pulse-duration accounting ([`optics`]) and a Monte Carlo
//! generator with known ground truth ([`simulator`]).
//!
//! Times are picoseconds throughout, except in [`optics`] which works in SI
//! units.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod distributions;
mod error;
pub mod fitting;
pub mod histogram;
pub mod lsq;
pub mod nnls;
pub mod optics;
pub(crate) mod par;
pub mod quadrature;
pub mod simulator;
pub mod special;
pub mod stats;
pub mod table;
pub mod timestamps;
pub mod tomography;

pub use error::{Error, Result};

/// Crate version, recorded in artifact headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

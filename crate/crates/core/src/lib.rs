//! Range-only cooperative localization for a pair of planar robots.
//!
//! Robot R1 runs an ordinary constant-velocity Kalman filter fed by frequent
//! GPS fixes. Robot R2 only gets sporadic GPS; between fixes it converts the
//! inter-robot range into a position estimate with the unscented transform
//! and fuses it with its own motion prediction through split covariance
//! intersection, keeping track of which part of its covariance is correlated
//! with the range-derived estimate.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`], [`linalg`], [`rng`]: shared value types, covariance hygiene and
//!   seeded random streams.
//! - [`kalman`]: constant-velocity predict and Joseph-form position updates.
//! - [`unscented`]: sigma points, the unscented transform and the
//!   range-constrained position estimate.
//! - [`sci`]: split covariance intersection, weight search and split-aware
//!   GPS updates.
//! - [`sim`]: truth paths, measurement synthesis and the per-epoch loop.
//! - [`montecarlo`]: parameter sampling, parallel batches, binning and CSV
//!   summaries.

// Validation code negates comparisons on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kalman;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod sci;
pub mod sim;
pub mod types;
pub mod unscented;

pub use error::{Error, Result};
pub use types::{CovMat, PosVec, SplitEstimate, StateVec};

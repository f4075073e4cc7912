//! Confidence distributions (CDs) and confidence curves for scalar focus
//! parameters.
//!
//! The crate covers exact pivots, first-order normal CDs, profile deviances
//! mapped through the chi-squared(1) distribution (optionally Bartlett
//! corrected), optimal conditional CDs for exponential families, CD fusion,
//! order-statistic quantile curves, random-effects spread CDs and robust
//! curves built from minimum power-divergence criteria.

pub mod cd;
pub mod conditional;
pub mod error;
pub mod fixtures;
pub mod fusion;
pub mod interp;
pub mod kernels;
pub mod likelihood;
pub mod optimize;
pub mod quantile;
pub mod random_effects;
pub mod robust;
pub mod special;
pub mod stats;

pub use cd::{
    cc_from_cd, cd_from_cc, cd_from_pivot, equi_tailed_interval, level_set_region,
    normal_approx_cd, CdGrid, ConfidenceCurve, ConfidenceRegion,
};
pub use error::{Error, Result};
pub use kernels::{Probability, SeedStreams};

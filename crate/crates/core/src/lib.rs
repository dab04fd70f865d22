//! Infrastructure quality provision analytics.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical stage of the
//! per-city pipeline:
//!
//! * [`tract`]: the census-tract data model and feature matrix.
//! * [`labeling`]: two-cluster hazard labelling with silhouette reporting.
//! * [`resample`]: SMOTE minority oversampling.
//! * [`gbdt`]: second-order gradient-boosted trees, cross validation and
//!   random hyperparameter search.
//! * [`shap`]: exact path-dependent tree SHAP plus a brute-force oracle.
//! * [`lowess`] and [`thresholds`]: dependence-curve smoothing and optimal
//!   quantity thresholds.
//! * [`provision`]: quality and quantity provision scores.
//! * [`inequality`]: inequality index and income-disparity statistics.
//!
//! File formats, orchestration and the command line live in the `iqp` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod gbdt;
pub mod inequality;
pub mod labeling;
pub mod lowess;
pub mod matrix;
pub mod provision;
pub mod resample;
pub mod seed;
pub mod shap;
pub mod stats;
pub mod thresholds;
pub mod tract;

pub use error::{Error, Result};
pub use matrix::Matrix;

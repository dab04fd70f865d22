//! Files, orchestration and command line for infrastructure quality
//! provision analysis. Numerical work lives in `iqp-core`.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod model_io;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};

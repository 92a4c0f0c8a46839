//! Layer-wise spatial-transformation explanations for dense classifiers.
pub mod concepts;
pub mod data;
pub mod error;
pub mod experiments;
pub mod explain;
pub mod fed;
pub mod games;
pub mod nn;
pub mod report;
pub mod seed;
pub mod spectral;
pub use error::{Error, Result};

//! Few-shot image classification with truncated path signatures.
//!
//! Images become streams, streams become signature (or log-signature)
//! features, each class is summarised by the element-wise mean of its
//! training features, and test features are scored against every class
//! representative by RMSE or MAE after per-class scale-factor calibration.

pub mod calibration;
pub mod classifier;
pub mod cli;
pub mod data_io;
pub mod embedding;
pub mod error;
pub mod path_signature;
pub mod scoring;
pub mod seeds;
pub mod signal_analysis;
pub mod tensor_algebra;

pub use error::{Error, Result};

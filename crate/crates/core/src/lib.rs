//! Occluded scene composition, object-persistence fine-tuning and
//! occlusion robustness analysis for small image classifiers.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
pub mod imagination;
pub mod netcore;
pub mod occlusion;
pub mod protocol;

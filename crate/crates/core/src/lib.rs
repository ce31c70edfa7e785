//! Stereo matching with training-free features, cost normalization, color
//! transfer between domains and self-supervised reconstruction losses.

pub mod cli;
pub mod color;
pub mod costnorm;
pub mod costvolume;
pub mod dataio;
pub mod disparity;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod reconstruction;
pub mod report;
pub mod types;

pub use error::{Error, Result};

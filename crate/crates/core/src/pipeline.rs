//! Training-free stereo: features, cost normalization, correlation, regression
//! and upsampling back to the input resolution.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::costnorm::{cost_normalize, NormConfig};
use crate::costvolume::{correlation_volume, DEFAULT_D_MAX};
use crate::disparity::{regress_disparity, to_full_resolution, RegressionConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig};
use crate::types::{DisparityMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoConfig {
    pub features: FeatureConfig,
    pub norm: NormConfig,
    /// Number of disparity candidates at feature resolution.
    pub d_max: usize,
    pub regression: RegressionConfig,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            norm: NormConfig::default(),
            d_max: DEFAULT_D_MAX,
            regression: RegressionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub features: Duration,
    pub normalize: Duration,
    pub volume: Duration,
    pub regress: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.features + self.normalize + self.volume + self.regress
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoOutput {
    /// Input-resolution disparity in input pixels.
    pub disparity: DisparityMap,
    /// Feature-resolution disparity in feature pixels.
    pub coarse: DisparityMap,
    pub timings: StageTimings,
}

pub fn run_stereo(left: &Image, right: &Image, cfg: &StereoConfig) -> Result<StereoOutput> {
    if !left.same_size(right) {
        return Err(Error::shape(left.dims(), right.dims()));
    }
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (fl, fr) = rayon::join(
        || extract_features(left, &cfg.features),
        || extract_features(right, &cfg.features),
    );
    let (fl, fr) = (fl?, fr?);
    timings.features = t.elapsed();

    let t = Instant::now();
    let (nl, nr) = cost_normalize(&fl, &fr, &cfg.norm)?;
    timings.normalize = t.elapsed();

    let t = Instant::now();
    let vol = correlation_volume(&nl, &nr, cfg.d_max)?;
    timings.volume = t.elapsed();

    let t = Instant::now();
    let coarse = regress_disparity(&vol, &cfg.regression)?;
    timings.regress = t.elapsed();

    let disparity = to_full_resolution(&coarse, cfg.features.downsample, left.width(), left.height());
    Ok(StereoOutput {
        disparity,
        coarse,
        timings,
    })
}

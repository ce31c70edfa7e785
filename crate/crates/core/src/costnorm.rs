//! Parameter-free cost normalization applied to both views right before the
//! cost volume is built: channel normalization (each channel divided by its
//! spatial L2 norm), then pixel normalization (each per-pixel feature vector
//! divided by its L2 norm across channels). No zero-centering is done.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FeatureMap;

/// Sits inside the square root, so it must stay far below the squared norm of
/// the smallest pixel vector left after channel normalization (about 1e-11 for
/// a 32x32 map whose pixel norms span three decades).
pub const DEFAULT_EPSILON: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub epsilon: f64,
    pub apply_channel: bool,
    pub apply_pixel: bool,
}

impl Default for NormConfig {
    fn default() -> Self {
        CostNormMode::On.config()
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn mode(&self) -> CostNormMode {
        match (self.apply_channel, self.apply_pixel) {
            (true, true) => CostNormMode::On,
            (false, false) => CostNormMode::Off,
            (true, false) => CostNormMode::ChannelOnly,
            (false, true) => CostNormMode::PixelOnly,
        }
    }
}

/// Which of the two normalizations run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostNormMode {
    #[default]
    On,
    Off,
    ChannelOnly,
    PixelOnly,
}

impl CostNormMode {
    pub fn config(self) -> NormConfig {
        let (apply_channel, apply_pixel) = match self {
            Self::On => (true, true),
            Self::Off => (false, false),
            Self::ChannelOnly => (true, false),
            Self::PixelOnly => (false, true),
        };
        NormConfig {
            epsilon: DEFAULT_EPSILON,
            apply_channel,
            apply_pixel,
        }
    }
}

impl FromStr for CostNormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            "channel-only" => Ok(Self::ChannelOnly),
            "pixel-only" => Ok(Self::PixelOnly),
            other => Err(Error::InvalidConfig(format!(
                "unknown cost-norm mode `{other}` (expected on, off, channel-only or pixel-only)"
            ))),
        }
    }
}

impl fmt::Display for CostNormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::On => "on",
            Self::Off => "off",
            Self::ChannelOnly => "channel-only",
            Self::PixelOnly => "pixel-only",
        })
    }
}

/// `out[c,h,w] = f[c,h,w] / sqrt(sum_{h,w} f[c,h,w]^2 + eps)`.
pub fn channel_normalize(f: &FeatureMap, eps: f64) -> FeatureMap {
    let plane = f.height * f.width;
    let mut out = f.clone();
    if plane == 0 {
        return out;
    }
    out.data.par_chunks_mut(plane).for_each(|channel| {
        let sum_sq: f64 = channel.iter().map(|v| v * v).sum();
        let denom = (sum_sq + eps).sqrt();
        for v in channel.iter_mut() {
            *v /= denom;
        }
    });
    out
}

/// `out[c,h,w] = f[c,h,w] / sqrt(sum_c f[c,h,w]^2 + eps)`.
pub fn pixel_normalize(f: &FeatureMap, eps: f64) -> FeatureMap {
    let plane = f.height * f.width;
    let mut out = f.clone();
    let denoms: Vec<f64> = (0..plane)
        .into_par_iter()
        .map(|i| {
            let sum_sq: f64 = (0..f.channels)
                .map(|c| {
                    let v = f.data[c * plane + i];
                    v * v
                })
                .sum();
            (sum_sq + eps).sqrt()
        })
        .collect();
    for channel in out.data.chunks_mut(plane.max(1)) {
        for (v, d) in channel.iter_mut().zip(&denoms) {
            *v /= d;
        }
    }
    out
}

/// Normalizes both views independently, channel step first.
pub fn cost_normalize(left: &FeatureMap, right: &FeatureMap, cfg: &NormConfig) -> Result<(FeatureMap, FeatureMap)> {
    cfg.validate()?;
    if !left.same_shape(right) {
        return Err(Error::shape(left.shape(), right.shape()));
    }
    let run = |f: &FeatureMap| {
        let mut out = if cfg.apply_channel {
            channel_normalize(f, cfg.epsilon)
        } else {
            f.clone()
        };
        if cfg.apply_pixel {
            out = pixel_normalize(&out, cfg.epsilon);
        }
        out
    };
    Ok((run(left), run(right)))
}

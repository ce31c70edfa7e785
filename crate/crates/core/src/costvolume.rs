//! Correlation and concatenation cost volumes, and the cost-value histogram.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CostVolume, FeatureMap, Polarity};

/// Maximum displacement of the correlation layer, in feature pixels.
pub const DEFAULT_D_MAX: usize = 128;

pub const HISTOGRAM_BINS: usize = 30;
pub const HISTOGRAM_RANGE: f64 = 30.0;

fn check_inputs(left: &FeatureMap, right: &FeatureMap, d_max: usize) -> Result<()> {
    if !left.same_shape(right) {
        return Err(Error::shape(left.shape(), right.shape()));
    }
    if d_max == 0 || d_max > left.width {
        return Err(Error::InvalidConfig(format!(
            "d_max must be in [1, {}], got {d_max}",
            left.width
        )));
    }
    Ok(())
}

/// `cost[d,h,w] = (1/C) * sum_c left[c,h,w] * right[c,h,w-d]` for `d` in `0..d_max`.
///
/// Candidates with `w - d < 0` hold 0 and are marked invalid.
pub fn correlation_volume(left: &FeatureMap, right: &FeatureMap, d_max: usize) -> Result<CostVolume> {
    check_inputs(left, right, d_max)?;
    let (c_n, h, w) = (left.channels, left.height, left.width);
    let plane = h * w;
    let inv_c = 1.0 / c_n as f64;
    let mut data = vec![0.0; d_max * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(d, slice)| {
        for y in 0..h {
            for x in d..w {
                let mut acc = 0.0;
                for c in 0..c_n {
                    acc += left.get(c, y, x) * right.get(c, y, x - d);
                }
                slice[y * w + x] = acc * inv_c;
            }
        }
    });
    let mut valid = vec![false; d_max * plane];
    for d in 0..d_max {
        for y in 0..h {
            let row = (d * h + y) * w;
            valid[row + d..row + w].iter_mut().for_each(|v| *v = true);
        }
    }
    CostVolume::new(d_max, h, w, data, valid, Polarity::Similarity)
}

/// `2C x D x H x W` volume: left features in channels `0..C`, right features
/// shifted by `d` in channels `C..2C`, zero where the shift leaves the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatVolume {
    pub channels: usize,
    pub disparities: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ConcatVolume {
    #[inline]
    pub fn get(&self, k: usize, d: usize, y: usize, x: usize) -> f64 {
        self.data[((k * self.disparities + d) * self.height + y) * self.width + x]
    }
}

pub fn concat_volume(left: &FeatureMap, right: &FeatureMap, d_max: usize) -> Result<ConcatVolume> {
    check_inputs(left, right, d_max)?;
    let (c_n, h, w) = (left.channels, left.height, left.width);
    let plane = h * w;
    let mut data = vec![0.0; 2 * c_n * d_max * plane];
    data.par_chunks_mut(d_max * plane).enumerate().for_each(|(k, block)| {
        for d in 0..d_max {
            let slice = &mut block[d * plane..(d + 1) * plane];
            if k < c_n {
                slice.copy_from_slice(left.channel(k));
            } else {
                let src = right.channel(k - c_n);
                for y in 0..h {
                    for x in d..w {
                        slice[y * w + x] = src[y * w + x - d];
                    }
                }
            }
        }
    });
    Ok(ConcatVolume {
        channels: 2 * c_n,
        disparities: d_max,
        height: h,
        width: w,
        data,
    })
}

/// Distribution of valid cost values over 30 unit bins on `[0, 30)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    /// Fraction of in-range values per bin; sums to 1.
    pub proportions: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn cost_histogram(vol: &CostVolume) -> Result<Histogram> {
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    let (mut underflow, mut overflow, mut seen) = (0u64, 0u64, 0u64);
    for (v, ok) in vol.data.iter().zip(&vol.valid) {
        if !ok {
            continue;
        }
        seen += 1;
        if *v < 0.0 {
            underflow += 1;
        } else if *v >= HISTOGRAM_RANGE {
            overflow += 1;
        } else {
            counts[(v.floor() as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
    }
    if seen == 0 {
        return Err(Error::EmptyVolume);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySupport("no cost values inside [0, 30)"));
    }
    let proportions = counts.iter().map(|&n| n as f64 / total as f64).collect();
    Ok(Histogram {
        bin_edges: (0..=HISTOGRAM_BINS).map(|k| k as f64).collect(),
        proportions,
        counts,
        underflow,
        overflow,
    })
}

//! Training-free lower-layer features: intensity, Sobel gradients and census bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{to_grayscale, FeatureMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Spatial stride of the feature map relative to the input image.
    pub downsample: usize,
    /// Side of the square census window; odd and at least 3.
    pub census_window: usize,
    pub include_gradients: bool,
    pub include_intensity: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            downsample: 2,
            census_window: 3,
            include_gradients: true,
            include_intensity: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.downsample == 0 {
            return Err(Error::InvalidConfig("downsample stride must be >= 1".into()));
        }
        if self.census_window < 3 || self.census_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "census window must be odd and >= 3, got {}",
                self.census_window
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        usize::from(self.include_intensity)
            + 2 * usize::from(self.include_gradients)
            + self.census_window * self.census_window
            - 1
    }
}

/// Area-average downsampling by an integer stride; trailing rows/columns that
/// do not fill a whole block are dropped.
fn area_downsample(src: &[f64], width: usize, height: usize, stride: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (width / stride, height / stride);
    if stride == 1 {
        return (src.to_vec(), w, h);
    }
    let norm = 1.0 / (stride * stride) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in 0..stride {
                let row = (y * stride + dy) * width;
                for dx in 0..stride {
                    acc += src[row + x * stride + dx];
                }
            }
            out[y * w + x] = acc * norm;
        }
    }
    (out, w, h)
}

/// Computes the feature stack in fixed channel order: intensity, Sobel-x,
/// Sobel-y, then census comparisons over the window in row-major neighbor
/// order with the center skipped. Borders use replicate padding.
pub fn extract_features(img: &Image, cfg: &FeatureConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    let gray = to_grayscale(img);
    let (g, w, h) = area_downsample(gray.data(), gray.width(), gray.height(), cfg.downsample);
    if w < cfg.census_window || h < cfg.census_window {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: cfg.census_window,
        });
    }

    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        g[yc * w + xc]
    };

    let mut out = FeatureMap::zeros(cfg.channels(), h, w);
    let half = (cfg.census_window / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let center = g[y * w + x];
            let mut c = 0;
            if cfg.include_intensity {
                out.set(c, y, x, center);
                c += 1;
            }
            if cfg.include_gradients {
                let gx = (at(xi + 1, yi - 1) + 2.0 * at(xi + 1, yi) + at(xi + 1, yi + 1)
                    - at(xi - 1, yi - 1)
                    - 2.0 * at(xi - 1, yi)
                    - at(xi - 1, yi + 1))
                    / 8.0;
                let gy = (at(xi - 1, yi + 1) + 2.0 * at(xi, yi + 1) + at(xi + 1, yi + 1)
                    - at(xi - 1, yi - 1)
                    - 2.0 * at(xi, yi - 1)
                    - at(xi + 1, yi - 1))
                    / 8.0;
                out.set(c, y, x, gx);
                out.set(c + 1, y, x, gy);
                c += 2;
            }
            for dy in -half..=half {
                for dx in -half..=half {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    // ties map to 0
                    let bit = if at(xi + dx, yi + dy) > center { 1.0 } else { 0.0 };
                    out.set(c, y, x, bit);
                    c += 1;
                }
            }
        }
    }
    Ok(out)
}

//! Disparity regression from a cost volume and the source-domain supervised losses.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CostVolume, DisparityMap, OcclusionMask, Plane, Polarity};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the logarithm.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RegressionMode {
    /// Softmax-weighted expectation of the disparity index.
    SoftArgmin,
    /// Winner-take-all; ties go to the smallest disparity.
    #[default]
    Wta,
}

impl FromStr for RegressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft-argmin" => Ok(Self::SoftArgmin),
            "wta" => Ok(Self::Wta),
            other => Err(Error::InvalidConfig(format!(
                "unknown regression mode `{other}` (expected soft-argmin or wta)"
            ))),
        }
    }
}

impl fmt::Display for RegressionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SoftArgmin => "soft-argmin",
            Self::Wta => "wta",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub mode: RegressionMode,
    /// Softmax temperature applied to the similarity scores.
    pub beta: f64,
    /// Half-width of the box filter run on each disparity slice; 0 disables it.
    pub aggregation_radius: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            mode: RegressionMode::default(),
            beta: 1.0,
            aggregation_radius: 2,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Box-filters every disparity slice, averaging only valid entries inside the
/// window. Invalid entries stay invalid.
pub fn aggregate_box(vol: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return vol.clone();
    }
    let (h, w) = (vol.height, vol.width);
    let plane = h * w;
    let mut out = vol.clone();
    out.data
        .par_chunks_mut(plane)
        .zip(vol.data.par_chunks(plane).zip(vol.valid.par_chunks(plane)))
        .for_each(|(dst, (src, valid))| {
            // integral images of values and valid counts, (h+1) x (w+1)
            let stride = w + 1;
            let mut sum = vec![0.0; (h + 1) * stride];
            let mut cnt = vec![0u32; (h + 1) * stride];
            for y in 0..h {
                let (mut row_sum, mut row_cnt) = (0.0, 0u32);
                for x in 0..w {
                    if valid[y * w + x] {
                        row_sum += src[y * w + x];
                        row_cnt += 1;
                    }
                    sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row_sum;
                    cnt[(y + 1) * stride + x + 1] = cnt[y * stride + x + 1] + row_cnt;
                }
            }
            for y in 0..h {
                let y0 = y.saturating_sub(radius);
                let y1 = (y + radius + 1).min(h);
                for x in 0..w {
                    if !valid[y * w + x] {
                        continue;
                    }
                    let x0 = x.saturating_sub(radius);
                    let x1 = (x + radius + 1).min(w);
                    let s =
                        sum[y1 * stride + x1] - sum[y0 * stride + x1] - sum[y1 * stride + x0] + sum[y0 * stride + x0];
                    let n =
                        cnt[y1 * stride + x1] + cnt[y0 * stride + x0] - cnt[y0 * stride + x1] - cnt[y1 * stride + x0];
                    dst[y * w + x] = s / f64::from(n);
                }
            }
        });
    out
}

/// Regresses a disparity per pixel, in units of the volume's disparity index.
///
/// Soft-argmin computes `sum_d d * softmax_d(beta * s[d])` over valid `d`,
/// where `s` is the similarity score. For a volume holding costs the scores
/// are negated first, which is the usual soft-argmin over costs.
pub fn regress_disparity(vol: &CostVolume, cfg: &RegressionConfig) -> Result<DisparityMap> {
    cfg.validate()?;
    let vol = aggregate_box(vol, cfg.aggregation_radius);
    let sign = match vol.polarity {
        Polarity::Similarity => 1.0,
        Polarity::Cost => -1.0,
    };
    let (h, w) = (vol.height, vol.width);
    let results: Vec<Option<f64>> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (y, x) = (i / w, i % w);
            match cfg.mode {
                RegressionMode::Wta => {
                    let mut best: Option<(usize, f64)> = None;
                    for d in 0..vol.disparities {
                        if !vol.is_valid(d, y, x) {
                            continue;
                        }
                        let s = sign * vol.get(d, y, x);
                        if best.is_none_or(|(_, b)| s > b) {
                            best = Some((d, s));
                        }
                    }
                    best.map(|(d, _)| d as f64)
                }
                RegressionMode::SoftArgmin => {
                    let peak = (0..vol.disparities)
                        .filter(|&d| vol.is_valid(d, y, x))
                        .map(|d| sign * cfg.beta * vol.get(d, y, x))
                        .fold(f64::NEG_INFINITY, f64::max);
                    if peak == f64::NEG_INFINITY {
                        return None;
                    }
                    let (mut num, mut den) = (0.0, 0.0);
                    for d in 0..vol.disparities {
                        if vol.is_valid(d, y, x) {
                            let p = (sign * cfg.beta * vol.get(d, y, x) - peak).exp();
                            num += d as f64 * p;
                            den += p;
                        }
                    }
                    Some(num / den)
                }
            }
        })
        .collect();
    Ok(DisparityMap {
        width: w,
        height: h,
        valid: results.iter().map(Option::is_some).collect(),
        disparity: results.into_iter().map(|r| r.unwrap_or(0.0)).collect(),
    })
}

/// Nearest-neighbor upsampling of a feature-resolution map to `width x height`,
/// with disparities multiplied by the stride.
pub fn to_full_resolution(map: &DisparityMap, stride: usize, width: usize, height: usize) -> DisparityMap {
    let s = stride as f64;
    let mut out = DisparityMap {
        width,
        height,
        disparity: vec![0.0; width * height],
        valid: vec![false; width * height],
    };
    if map.width == 0 || map.height == 0 {
        return out;
    }
    for y in 0..height {
        let sy = (y / stride).min(map.height - 1);
        for x in 0..width {
            let sx = (x / stride).min(map.width - 1);
            out.disparity[y * width + x] = map.get(sx, sy) * s;
            out.valid[y * width + x] = map.is_valid(sx, sy);
        }
    }
    out
}

fn joint_support(pred: &DisparityMap, gt: &DisparityMap) -> Result<Vec<usize>> {
    if !pred.same_size(gt) {
        return Err(Error::shape(pred.dims(), gt.dims()));
    }
    let support: Vec<usize> = (0..pred.disparity.len())
        .filter(|&i| pred.valid[i] && gt.valid[i])
        .collect();
    if support.is_empty() {
        return Err(Error::EmptyLossSupport);
    }
    Ok(support)
}

/// Mean smooth-L1 of `pred - gt` over pixels valid in both maps.
pub fn smooth_l1_loss(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    let support = joint_support(pred, gt)?;
    let total: f64 = support
        .iter()
        .map(|&i| {
            let e = (pred.disparity[i] - gt.disparity[i]).abs();
            if e < 1.0 {
                0.5 * e * e
            } else {
                e - 0.5
            }
        })
        .sum();
    Ok(total / support.len() as f64)
}

/// Gradient of [`smooth_l1_loss`] with respect to each predicted disparity.
pub fn smooth_l1_grad(pred: &DisparityMap, gt: &DisparityMap) -> Result<Plane> {
    let support = joint_support(pred, gt)?;
    let n = support.len() as f64;
    let mut grad = Plane::zeros(pred.width, pred.height);
    for i in support {
        let e = pred.disparity[i] - gt.disparity[i];
        let g = if e.abs() < 1.0 { e } else { e.signum() };
        grad.data[i] = g / n;
    }
    Ok(grad)
}

/// Mean binary cross entropy of predicted occlusion probabilities against labels.
pub fn bce_loss(pred: &OcclusionMask, gt: &OcclusionMask) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::shape(pred.dims(), gt.dims()));
    }
    let n = pred.values.len();
    if n == 0 {
        return Err(Error::EmptyLossSupport);
    }
    let total: f64 = pred
        .values
        .iter()
        .zip(&gt.values)
        .map(|(&p, &g)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MaskKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn volume(d: usize, h: usize, w: usize, data: Vec<f64>) -> CostVolume {
        let n = data.len();
        CostVolume::new(d, h, w, data, vec![true; n], Polarity::Similarity).unwrap()
    }

    fn soft(beta: f64) -> RegressionConfig {
        RegressionConfig {
            mode: RegressionMode::SoftArgmin,
            beta,
            aggregation_radius: 0,
        }
    }

    const WTA: RegressionConfig = RegressionConfig {
        mode: RegressionMode::Wta,
        beta: 1.0,
        aggregation_radius: 0,
    };

    #[test]
    fn peaked_softmax_hits_peak() {
        let mut data = vec![0.0; 16];
        data[7] = 1.0;
        let map = regress_disparity(&volume(16, 1, 1, data), &soft(50.0)).unwrap();
        assert!((map.disparity[0] - 7.0).abs() < 1e-3);
    }

    #[test]
    fn symmetric_two_peaks_average() {
        let mut data = vec![0.0; 7];
        data[2] = 1.0;
        data[4] = 1.0;
        let map = regress_disparity(&volume(7, 1, 1, data), &soft(3.0)).unwrap();
        // the off-peak terms are symmetric only around 3 for d in 0..=6
        assert!((map.disparity[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wta_matches_loop_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (d_n, h, w) = (9, 4, 5);
        // coarse values so ties occur
        let data: Vec<f64> = (0..d_n * h * w).map(|_| rng.random_range(0..4) as f64).collect();
        let vol = volume(d_n, h, w, data);
        let map = regress_disparity(&vol, &WTA).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut best = 0;
                for d in 1..d_n {
                    if vol.get(d, y, x) > vol.get(best, y, x) {
                        best = d;
                    }
                }
                assert_eq!(map.get(x, y), best as f64);
            }
        }
    }

    #[test]
    fn soft_argmin_is_convex_combination_of_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (d_n, h, w) = (12, 3, 14);
        let data: Vec<f64> = (0..d_n * h * w).map(|_| rng.random()).collect();
        let mut valid = vec![true; data.len()];
        for d in 0..d_n {
            for y in 0..h {
                for x in 0..d.min(w) {
                    valid[(d * h + y) * w + x] = false;
                }
            }
        }
        let vol = CostVolume::new(d_n, h, w, data, valid, Polarity::Similarity).unwrap();
        let map = regress_disparity(&vol, &soft(5.0)).unwrap();
        for y in 0..h {
            for x in 0..w {
                let hi = x.min(d_n - 1) as f64;
                assert!(map.get(x, y) >= 0.0 && map.get(x, y) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn high_beta_converges_to_wta() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (d_n, h, w) = (10, 3, 3);
        let mut data: Vec<f64> = (0..d_n * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        // enforce a unique per-pixel maximum with margin 0.1 over all others
        for i in 0..h * w {
            let k = rng.random_range(0..d_n);
            let top = (0..d_n).map(|d| data[d * h * w + i]).fold(0.0, f64::max);
            data[k * h * w + i] = top + 0.1 + 1.0;
        }
        let vol = volume(d_n, h, w, data);
        let hard = regress_disparity(&vol, &WTA).unwrap();
        let soft_map = regress_disparity(&vol, &soft(100.0)).unwrap();
        for (a, b) in hard.disparity.iter().zip(&soft_map.disparity) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn cost_polarity_is_negated() {
        let data = vec![5.0, 1.0, 3.0];
        let vol = CostVolume::new(3, 1, 1, data, vec![true; 3], Polarity::Cost).unwrap();
        assert_eq!(regress_disparity(&vol, &WTA).unwrap().disparity[0], 1.0);
    }

    #[test]
    fn no_valid_candidate_marks_invalid() {
        let vol = CostVolume::new(2, 1, 1, vec![0.0, 0.0], vec![false, false], Polarity::Similarity).unwrap();
        for cfg in [WTA, soft(1.0)] {
            let map = regress_disparity(&vol, &cfg).unwrap();
            assert!(!map.valid[0]);
        }
    }

    #[test]
    fn box_aggregation_averages_valid_only() {
        let data = vec![1.0, 2.0, 3.0, 100.0];
        let valid = vec![true, true, true, false];
        let vol = CostVolume::new(1, 1, 4, data, valid, Polarity::Similarity).unwrap();
        let agg = aggregate_box(&vol, 1);
        assert_eq!(agg.data[..3], [1.5, 2.0, 2.5]);
        assert!(!agg.valid[3]);
    }

    #[test]
    fn full_resolution_scales_and_replicates() {
        let map = DisparityMap::from_values(2, 1, vec![1.0, 3.0]).unwrap();
        let full = to_full_resolution(&map, 2, 5, 2);
        assert_eq!(full.disparity, vec![2.0, 2.0, 6.0, 6.0, 6.0, 2.0, 2.0, 6.0, 6.0, 6.0]);
    }

    #[test]
    fn smooth_l1_branches() {
        let gt = DisparityMap::constant(4, 3, 10.0);
        assert_eq!(smooth_l1_loss(&gt, &gt).unwrap(), 0.0);
        assert_eq!(smooth_l1_loss(&DisparityMap::constant(4, 3, 10.5), &gt).unwrap(), 0.125);
        assert_eq!(smooth_l1_loss(&DisparityMap::constant(4, 3, 13.0), &gt).unwrap(), 2.5);
        let mut none = gt.clone();
        none.valid = vec![false; 12];
        assert!(matches!(smooth_l1_loss(&none, &gt), Err(Error::EmptyLossSupport)));
    }

    #[test]
    fn smooth_l1_grad_values() {
        let gt = DisparityMap::constant(2, 2, 1.0);
        let mut pred = gt.clone();
        pred.disparity = vec![1.0, 1.5, 4.0, -2.0];
        let g = smooth_l1_grad(&pred, &gt).unwrap();
        assert_eq!(g.data, vec![0.0, 0.5 / 4.0, 1.0 / 4.0, -1.0 / 4.0]);
    }

    #[test]
    fn smooth_l1_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (w, h) = (6, 5);
        let gt = DisparityMap::from_values(w, h, (0..w * h).map(|_| rng.random_range(0.0..20.0)).collect()).unwrap();
        let mut pred = gt.clone();
        for v in pred.disparity.iter_mut() {
            // stay away from the |e| = 1 kink and from e = 0
            let mag = if rng.random_bool(0.5) {
                rng.random_range(0.1..0.9)
            } else {
                rng.random_range(1.1..4.0)
            };
            *v += if rng.random_bool(0.5) { mag } else { -mag };
        }
        let g = smooth_l1_grad(&pred, &gt).unwrap();
        let step = 1e-3;
        for i in 0..w * h {
            let mut plus = pred.clone();
            plus.disparity[i] += step;
            let mut minus = pred.clone();
            minus.disparity[i] -= step;
            let fd = (smooth_l1_loss(&plus, &gt).unwrap() - smooth_l1_loss(&minus, &gt).unwrap()) / (2.0 * step);
            let rel = (fd - g.data[i]).abs() / g.data[i].abs().max(fd.abs());
            assert!(rel <= 1e-3, "pixel {i}: fd {fd} analytic {}", g.data[i]);
        }
    }

    #[test]
    fn smooth_l1_is_c1_at_kink() {
        let gt = DisparityMap::constant(1, 1, 0.0);
        let at = |e: f64| smooth_l1_grad(&DisparityMap::constant(1, 1, e), &gt).unwrap().data[0];
        assert!((at(1.0 - 1e-9) - 1.0).abs() < 1e-8);
        assert_eq!(at(1.0), 1.0);
        let loss = |e: f64| smooth_l1_loss(&DisparityMap::constant(1, 1, e), &gt).unwrap();
        assert!((loss(1.0 - 1e-9) - loss(1.0 + 1e-9)).abs() < 1e-8);
    }

    fn mask(values: Vec<f64>, kind: MaskKind) -> OcclusionMask {
        let n = values.len();
        OcclusionMask {
            width: n,
            height: 1,
            valid: vec![true; n],
            values,
            kind,
        }
    }

    #[test]
    fn bce_known_values() {
        let gt = mask(vec![0.0, 1.0, 1.0, 0.0], MaskKind::Oracle);
        let exact = mask(gt.values.clone(), MaskKind::Soft);
        assert!(bce_loss(&exact, &gt).unwrap() <= 1e-6);
        let half = mask(vec![0.5; 4], MaskKind::Soft);
        assert!((bce_loss(&half, &gt).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let p: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let g: Vec<f64> = (0..50).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let mut expect = 0.0;
        for (pi, gi) in p.iter().zip(&g) {
            let pc = pi.clamp(1e-7, 1.0 - 1e-7);
            expect -= if *gi == 1.0 { pc.ln() } else { (1.0 - pc).ln() };
        }
        expect /= 50.0;
        let got = bce_loss(&mask(p, MaskKind::Soft), &mask(g, MaskKind::Oracle)).unwrap();
        assert!((got - expect).abs() < 1e-9);
    }
}

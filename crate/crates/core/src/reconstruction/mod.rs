//! Self-supervised losses on the target domain: backward warping, the
//! collision-based occlusion oracle, 3x3 SSIM, the occlusion-aware appearance
//! loss, occlusion regularization, edge-aware smoothness and the weighted total.

mod grad;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{bilinear_sample, DisparityMap, Image, MaskKind, OcclusionMask, Plane};

pub use grad::{gradient_check, reconstruction_grad_wrt_disp, GradCheckConfig, GradCheckReport, ReconstructionGrad};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_s_occ: f64,
    pub w_t_ar: f64,
    pub w_t_occ: f64,
    pub w_t_sm: f64,
    /// Balance between the SSIM term and the L1 term of the appearance loss.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_s_occ: 0.2,
            w_t_ar: 1.0,
            w_t_occ: 0.2,
            w_t_sm: 0.1,
            alpha: 0.85,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_s_occ, self.w_t_ar, self.w_t_occ, self.w_t_sm];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("loss weights must be >= 0, got {ws:?}")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The five unweighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub l_s_main: f64,
    pub l_s_occ: f64,
    pub l_t_ar: f64,
    pub l_t_occ: f64,
    pub l_t_sm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_s_main: f64,
    pub l_s_occ: f64,
    pub l_t_ar: f64,
    pub l_t_occ: f64,
    pub l_t_sm: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("l_s_main", self.l_s_main),
            ("l_s_occ", self.l_s_occ),
            ("l_t_ar", self.l_t_ar),
            ("l_t_occ", self.l_t_occ),
            ("l_t_sm", self.l_t_sm),
            ("total", self.total),
        ]
    }
}

/// Neumaier-compensated sum, so the total is the correctly rounded value of
/// the exact sum for the handful of terms used here.
fn compensated_sum(terms: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in terms {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<LossBreakdown> {
    let values = [parts.l_s_main, parts.l_s_occ, parts.l_t_ar, parts.l_t_occ, parts.l_t_sm];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "loss parts must be finite, got {values:?}"
        )));
    }
    let total = compensated_sum(&[
        parts.l_s_main,
        weights.w_s_occ * parts.l_s_occ,
        weights.w_t_ar * parts.l_t_ar,
        weights.w_t_occ * parts.l_t_occ,
        weights.w_t_sm * parts.l_t_sm,
    ]);
    Ok(LossBreakdown {
        l_s_main: parts.l_s_main,
        l_s_occ: parts.l_s_occ,
        l_t_ar: parts.l_t_ar,
        l_t_occ: parts.l_t_occ,
        l_t_sm: parts.l_t_sm,
        total,
    })
}

/// Synthesizes the left view from the right one: `warped[y,x] = right(x - d, y)`
/// with bilinear sampling. Invalid where the sample leaves the frame or the
/// disparity is invalid; those pixels hold 0.
pub fn warp_right_to_left(right: &Image, disp: &DisparityMap) -> Result<(Image, Vec<bool>)> {
    let (w, h) = (right.width(), right.height());
    if disp.width != w || disp.height != h {
        return Err(Error::shape(right.dims(), disp.dims()));
    }
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    let mut valid = vec![false; plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !disp.valid[i] {
                continue;
            }
            let (px, ok) = bilinear_sample(right, x as f64 - disp.disparity[i], y as f64);
            if ok {
                for (c, v) in px.iter().enumerate() {
                    data[c * plane + i] = *v;
                }
                valid[i] = true;
            }
        }
    }
    Ok((Image::from_parts_unchecked(w, h, data), valid))
}

/// Target column of a left pixel in the right view, rounded to the nearest integer.
#[inline]
fn target_column(x: usize, d: f64) -> i64 {
    (x as f64 - d).round() as i64
}

/// Marks a left pixel occluded when some valid pixel further right on the same
/// row lands on the same integer target column. Invalid ground truth gives 0
/// with `valid` cleared.
pub fn occlusion_oracle(gt: &DisparityMap) -> OcclusionMask {
    occlusion_scan(gt, false)
}

/// Variant that also counts collisions with pixels to the left, so every
/// member of a colliding group is marked.
pub fn occlusion_oracle_symmetric(gt: &DisparityMap) -> OcclusionMask {
    occlusion_scan(gt, true)
}

fn occlusion_scan(gt: &DisparityMap, symmetric: bool) -> OcclusionMask {
    let (w, h) = (gt.width, gt.height);
    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let base = y * w;
        let target = |x: usize| target_column(x, gt.disparity[base + x]);
        if symmetric {
            let mut counts = std::collections::HashMap::<i64, usize>::new();
            for x in (0..w).filter(|&x| gt.valid[base + x]) {
                *counts.entry(target(x)).or_default() += 1;
            }
            for x in (0..w).filter(|&x| gt.valid[base + x]) {
                if counts[&target(x)] > 1 {
                    row[x] = 1.0;
                }
            }
        } else {
            let mut seen = HashSet::new();
            for x in (0..w).rev() {
                if !gt.valid[base + x] {
                    continue;
                }
                let t = target(x);
                if seen.contains(&t) {
                    row[x] = 1.0;
                }
                seen.insert(t);
            }
        }
    });
    OcclusionMask {
        width: w,
        height: h,
        values,
        valid: gt.valid.clone(),
        kind: MaskKind::Oracle,
    }
}

/// Mirror index into `0..n` without repeating the edge sample (`-1 -> 1`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Box-filtered first and second moments of two planes over 3x3 windows.
pub(crate) struct WindowStats {
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub var_x: Vec<f64>,
    pub var_y: Vec<f64>,
    pub cov: Vec<f64>,
}

pub(crate) fn window_stats(a: &[f64], b: &[f64], w: usize, h: usize) -> WindowStats {
    let n = w * h;
    let mut s = WindowStats {
        mu_x: vec![0.0; n],
        mu_y: vec![0.0; n],
        var_x: vec![0.0; n],
        var_y: vec![0.0; n],
        cov: vec![0.0; n],
    };
    for y in 0..h {
        for x in 0..w {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -1..=1 {
                let yy = reflect(y as isize + dy, h);
                for dx in -1..=1 {
                    let q = yy * w + reflect(x as isize + dx, w);
                    let (u, v) = (a[q], b[q]);
                    sx += u;
                    sy += v;
                    sxx += u * u;
                    syy += v * v;
                    sxy += u * v;
                }
            }
            let i = y * w + x;
            let (mx, my) = (sx / 9.0, sy / 9.0);
            s.mu_x[i] = mx;
            s.mu_y[i] = my;
            s.var_x[i] = sxx / 9.0 - mx * mx;
            s.var_y[i] = syy / 9.0 - my * my;
            s.cov[i] = sxy / 9.0 - mx * my;
        }
    }
    s
}

#[inline]
pub(crate) fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// SSIM of two single planes with 3x3 windows and reflect padding.
fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> Vec<f64> {
    let s = window_stats(a, b, w, h);
    (0..w * h)
        .map(|i| ssim_from_moments(s.mu_x[i], s.mu_y[i], s.var_x[i], s.var_y[i], s.cov[i]))
        .collect()
}

/// Per-pixel SSIM, averaged over the three channels.
pub fn ssim3x3(a: &Image, b: &Image) -> Result<Plane> {
    if !a.same_size(b) {
        return Err(Error::shape(a.dims(), b.dims()));
    }
    Ok(ssim_planar(a.data(), b.data(), a.width(), a.height()))
}

fn ssim_planar(a: &[f64], b: &[f64], w: usize, h: usize) -> Plane {
    let n = w * h;
    let per_channel: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|c| ssim_plane(&a[c * n..(c + 1) * n], &b[c * n..(c + 1) * n], w, h))
        .collect();
    let data = (0..n)
        .map(|i| (per_channel[0][i] + per_channel[1][i] + per_channel[2][i]) / 3.0)
        .collect();
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Multiplies every channel by `1 - occ`.
pub(crate) fn mask_planar(img: &Image, occ: &OcclusionMask) -> Vec<f64> {
    let n = img.width() * img.height();
    img.data()
        .iter()
        .enumerate()
        .map(|(k, v)| v * (1.0 - occ.values[k % n]))
        .collect()
}

fn check_loss_inputs(l: &Image, warped: &Image, occ: &OcclusionMask, warp_valid: &[bool]) -> Result<()> {
    if !l.same_size(warped) {
        return Err(Error::shape(l.dims(), warped.dims()));
    }
    if occ.width != l.width() || occ.height != l.height() {
        return Err(Error::shape(l.dims(), occ.dims()));
    }
    if warp_valid.len() != l.width() * l.height() {
        return Err(Error::InvalidDimensions(format!(
            "warp mask has {} entries for a {} image",
            warp_valid.len(),
            l.dims()
        )));
    }
    Ok(())
}

/// Occlusion-aware appearance loss: both images are multiplied by `1 - occ`,
/// then `alpha * (1 - SSIM) / 2 + (1 - alpha) * L1` is averaged over the
/// warp-valid pixels. L1 is the channel mean of absolute differences.
pub fn reconstruction_loss(
    l: &Image,
    warped: &Image,
    occ: &OcclusionMask,
    warp_valid: &[bool],
    alpha: f64,
) -> Result<f64> {
    check_loss_inputs(l, warped, occ, warp_valid)?;
    let count = warp_valid.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::EmptyLossSupport);
    }
    let (w, h) = (l.width(), l.height());
    let n = w * h;
    let a = mask_planar(l, occ);
    let b = mask_planar(warped, occ);
    let ssim = ssim_planar(&a, &b, w, h);
    let mut total = 0.0;
    for i in (0..n).filter(|&i| warp_valid[i]) {
        let l1 = (0..3).map(|c| (a[c * n + i] - b[c * n + i]).abs()).sum::<f64>() / 3.0;
        total += alpha * (1.0 - ssim.data[i]) / 2.0 + (1.0 - alpha) * l1;
    }
    Ok(total / count as f64)
}

/// Mean of the occlusion values.
pub fn occlusion_regularizer(occ: &OcclusionMask) -> f64 {
    if occ.values.is_empty() {
        return 0.0;
    }
    occ.values.iter().sum::<f64>() / occ.values.len() as f64
}

/// Edge weight `exp(-|dI|)` for the forward difference between pixels `i` and `j`,
/// where `|dI|` is the channel mean of absolute differences.
#[inline]
pub(crate) fn edge_weight(img: &Image, i: usize, j: usize) -> f64 {
    let n = img.width() * img.height();
    let d = img.data();
    let grad = (0..3).map(|c| (d[c * n + j] - d[c * n + i]).abs()).sum::<f64>() / 3.0;
    (-grad).exp()
}

/// Edge-aware smoothness: the mean of `|d_x disp| * exp(-|d_x I|)` over
/// horizontal pairs with both disparities valid, plus the same for vertical pairs.
pub fn smoothness_loss(disp: &DisparityMap, img: &Image) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if disp.width != w || disp.height != h {
        return Err(Error::shape(img.dims(), disp.dims()));
    }
    let mut terms = [(0.0, 0usize), (0.0, 0usize)];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !disp.valid[i] {
                continue;
            }
            let neighbours = [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)];
            for (term, j) in terms.iter_mut().zip(neighbours) {
                if let Some(j) = j.filter(|&j| disp.valid[j]) {
                    term.0 += (disp.disparity[j] - disp.disparity[i]).abs() * edge_weight(img, i, j);
                    term.1 += 1;
                }
            }
        }
    }
    Ok(terms
        .iter()
        .map(|(s, n)| if *n == 0 { 0.0 } else { s / *n as f64 })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _, _| rng.random::<f64>()).unwrap()
    }

    /// Literal O(W^2) scan: occluded iff some valid x2 > x shares the rounded target.
    fn brute_force_occlusion(gt: &DisparityMap) -> Vec<f64> {
        let mut out = vec![0.0; gt.width * gt.height];
        for y in 0..gt.height {
            for x in 0..gt.width {
                let i = y * gt.width + x;
                if !gt.valid[i] {
                    continue;
                }
                let tx = (x as f64 - gt.disparity[i]).round();
                for x2 in x + 1..gt.width {
                    let j = y * gt.width + x2;
                    if gt.valid[j] && (x2 as f64 - gt.disparity[j]).round() == tx {
                        out[i] = 1.0;
                        break;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_disparity_warp_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let r = random_image(&mut rng, 9, 7);
        let (warped, valid) = warp_right_to_left(&r, &DisparityMap::constant(9, 7, 0.0)).unwrap();
        assert_eq!(warped, r);
        assert!(valid.iter().all(|v| *v));
    }

    #[test]
    fn constant_rows_survive_translation() {
        let img = Image::from_fn(12, 6, |c, _, y| (y as f64 + c as f64) / 10.0).unwrap();
        let (warped, valid) = warp_right_to_left(&img, &DisparityMap::constant(12, 6, 5.0)).unwrap();
        for y in 0..6 {
            for x in 0..12 {
                assert_eq!(valid[y * 12 + x], x >= 5);
                if x >= 5 {
                    assert_eq!(warped.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn shifted_pair_reconstructs_left() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (w, h, s) = (20, 4, 3);
        let left = random_image(&mut rng, w, h);
        // right(u) = left(u + s); disparity s maps left x back onto right x - s
        let right = Image::from_fn(w, h, |c, x, y| if x + s < w { left.get(c, x + s, y) } else { 0.5 }).unwrap();
        let (warped, valid) = warp_right_to_left(&right, &DisparityMap::constant(w, h, s as f64)).unwrap();
        for y in 0..h {
            for x in s..w {
                assert!(valid[y * w + x]);
                for c in 0..3 {
                    assert!((warped.get(c, x, y) - left.get(c, x, y)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn occlusion_constant_disparity_is_clear() {
        let mask = occlusion_oracle(&DisparityMap::constant(16, 3, 4.0));
        assert!(mask.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn occlusion_step_row() {
        let d: Vec<f64> = (0..20).map(|x| if x < 10 { 0.0 } else { 4.0 }).collect();
        let mask = occlusion_oracle(&DisparityMap::from_values(20, 1, d).unwrap());
        let occluded: Vec<usize> = (0..20).filter(|&x| mask.values[x] == 1.0).collect();
        assert_eq!(occluded, vec![6, 7, 8, 9]);
        assert_eq!(mask.kind, MaskKind::Oracle);
    }

    #[test]
    fn symmetric_variant_marks_both_sides() {
        let d: Vec<f64> = (0..20).map(|x| if x < 10 { 0.0 } else { 4.0 }).collect();
        let mask = occlusion_oracle_symmetric(&DisparityMap::from_values(20, 1, d).unwrap());
        let occluded: Vec<usize> = (0..20).filter(|&x| mask.values[x] == 1.0).collect();
        assert_eq!(occluded, vec![6, 7, 8, 9, 10, 11, 12, 13]);
    }

    #[test]
    fn invalid_gt_is_zero_and_flagged() {
        let mut gt =
            DisparityMap::from_values(20, 1, (0..20).map(|x| if x < 10 { 0.0 } else { 4.0 }).collect()).unwrap();
        gt.valid[7] = false;
        gt.valid[11] = false;
        let mask = occlusion_oracle(&gt);
        assert_eq!(mask.values[7], 0.0);
        assert!(!mask.valid[7]);
        assert_eq!(mask.values, brute_force_occlusion(&gt));
    }

    proptest! {
        #[test]
        fn occlusion_matches_brute_force(
            w in 1usize..64,
            rows in prop::collection::vec(prop::collection::vec((0u32..24, any::<bool>()), 64), 1..4),
        ) {
            let h = rows.len();
            let mut disparity = Vec::new();
            let mut valid = Vec::new();
            for row in &rows {
                for &(d, v) in &row[..w] {
                    disparity.push(d as f64);
                    valid.push(v || d % 3 != 0);
                }
            }
            let gt = DisparityMap { width: w, height: h, disparity, valid };
            prop_assert_eq!(occlusion_oracle(&gt).values, brute_force_occlusion(&gt));
        }
    }

    /// Straightforward per-pixel SSIM with its own padding and window loop.
    fn ssim_reference(a: &Image, b: &Image) -> Vec<f64> {
        let (w, h) = (a.width() as isize, a.height() as isize);
        let mirror = |i: isize, n: isize| {
            if i < 0 {
                -i
            } else if i >= n {
                2 * n - 2 - i
            } else {
                i
            }
        };
        let mut out = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for c in 0..3 {
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (xx, yy) = (mirror(x + dx, w) as usize, mirror(y + dy, h) as usize);
                            xs.push(a.get(c, xx, yy));
                            ys.push(b.get(c, xx, yy));
                        }
                    }
                    let mx = xs.iter().sum::<f64>() / 9.0;
                    let my = ys.iter().sum::<f64>() / 9.0;
                    let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / 9.0;
                    let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / 9.0;
                    let cxy = xs.iter().zip(&ys).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / 9.0;
                    acc +=
                        (2.0 * mx * my + 1e-4) * (2.0 * cxy + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                }
                out[(y * w + x) as usize] = acc / 3.0;
            }
        }
        out
    }

    #[test]
    fn ssim_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = random_image(&mut rng, 11, 8);
        let s = ssim3x3(&a, &a).unwrap();
        assert!(s.data.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn ssim_constants_closed_form() {
        let a = Image::filled(6, 5, [0.2; 3]).unwrap();
        let b = Image::filled(6, 5, [0.8; 3]).unwrap();
        let s = ssim3x3(&a, &b).unwrap();
        let expect = (2.0 * 0.16 + SSIM_C1) / (0.04 + 0.64 + SSIM_C1);
        assert!(s.data.iter().all(|v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn ssim_matches_reference_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let a = random_image(&mut rng, 10, 7);
        let b = random_image(&mut rng, 10, 7);
        let s = ssim3x3(&a, &b).unwrap();
        let t = ssim3x3(&b, &a).unwrap();
        for ((x, y), z) in s.data.iter().zip(&ssim_reference(&a, &b)).zip(&t.data) {
            assert!((x - y).abs() < 1e-9);
            assert!((x - z).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(x));
        }
    }

    #[test]
    fn perfect_reconstruction_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let l = random_image(&mut rng, 12, 9);
        let occ = OcclusionMask::zeros(12, 9, MaskKind::Soft);
        let loss = reconstruction_loss(&l, &l, &occ, &[true; 108], 0.85).unwrap();
        assert!(loss.abs() <= 1e-6);
    }

    #[test]
    fn fully_occluded_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let l = random_image(&mut rng, 12, 9);
        let r = random_image(&mut rng, 12, 9);
        let occ = OcclusionMask::soft(12, 9, vec![1.0; 108]).unwrap();
        let loss = reconstruction_loss(&l, &r, &occ, &[true; 108], 0.85).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn pure_l1_branch() {
        let l = Image::from_fn(8, 8, |_, x, y| 0.1 + 0.05 * ((x + y) % 5) as f64).unwrap();
        let warped = Image::from_fn(8, 8, |c, x, y| l.get(c, x, y) + 0.1).unwrap();
        let occ = OcclusionMask::zeros(8, 8, MaskKind::Soft);
        let loss = reconstruction_loss(&l, &warped, &occ, &[true; 64], 0.0).unwrap();
        assert!((loss - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_warp_support_errors() {
        let l = Image::filled(4, 4, [0.5; 3]).unwrap();
        let occ = OcclusionMask::zeros(4, 4, MaskKind::Soft);
        assert!(matches!(
            reconstruction_loss(&l, &l, &occ, &[false; 16], 0.85),
            Err(Error::EmptyLossSupport)
        ));
    }

    #[test]
    fn regularizer_means() {
        assert_eq!(occlusion_regularizer(&OcclusionMask::zeros(4, 4, MaskKind::Soft)), 0.0);
        assert_eq!(
            occlusion_regularizer(&OcclusionMask::soft(4, 1, vec![1.0; 4]).unwrap()),
            1.0
        );
        assert_eq!(
            occlusion_regularizer(&OcclusionMask::soft(4, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap()),
            0.5
        );
    }

    #[test]
    fn smoothness_cases() {
        let flat = Image::filled(8, 6, [0.3; 3]).unwrap();
        assert_eq!(smoothness_loss(&DisparityMap::constant(8, 6, 2.0), &flat).unwrap(), 0.0);

        let ramp = DisparityMap::from_values(8, 6, (0..48).map(|i| (i % 8) as f64).collect()).unwrap();
        assert!((smoothness_loss(&ramp, &flat).unwrap() - 1.0).abs() < 1e-12);

        let step =
            DisparityMap::from_values(8, 6, (0..48).map(|i| if i % 8 < 4 { 0.0 } else { 5.0 }).collect()).unwrap();
        let edge = Image::from_fn(8, 6, |_, x, _| if x < 4 { 0.0 } else { 1.0 }).unwrap();
        let on_flat = smoothness_loss(&step, &flat).unwrap();
        let on_edge = smoothness_loss(&step, &edge).unwrap();
        assert!(on_edge < on_flat);
        assert!((on_edge / on_flat - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn total_with_unit_parts_is_two_and_a_half() {
        let ones = LossParts {
            l_s_main: 1.0,
            l_s_occ: 1.0,
            l_t_ar: 1.0,
            l_t_occ: 1.0,
            l_t_sm: 1.0,
        };
        assert_eq!(total_loss(&ones, &LossWeights::default()).unwrap().total, 2.5);
        assert_eq!(
            total_loss(&LossParts::default(), &LossWeights::default())
                .unwrap()
                .total,
            0.0
        );
    }

    #[test]
    fn total_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let p = LossParts {
                l_s_main: rng.random(),
                l_s_occ: rng.random(),
                l_t_ar: rng.random(),
                l_t_occ: rng.random(),
                l_t_sm: rng.random(),
            };
            let w = LossWeights {
                w_s_occ: rng.random(),
                w_t_ar: rng.random(),
                w_t_occ: rng.random(),
                w_t_sm: rng.random(),
                alpha: 0.85,
            };
            let expect =
                p.l_s_main + w.w_s_occ * p.l_s_occ + w.w_t_ar * p.l_t_ar + w.w_t_occ * p.l_t_occ + w.w_t_sm * p.l_t_sm;
            assert!((total_loss(&p, &w).unwrap().total - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights {
            alpha: 1.5,
            ..LossWeights::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            w_t_sm: -0.1,
            ..LossWeights::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_loss_nonnegative(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_image(&mut rng, 7, 6);
            let r = random_image(&mut rng, 7, 6);
            let occ = OcclusionMask::soft(7, 6, (0..42).map(|_| rng.random()).collect()).unwrap();
            let loss = reconstruction_loss(&l, &r, &occ, &[true; 42], alpha).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}

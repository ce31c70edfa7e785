//! Analytic gradient of the appearance and smoothness losses with respect to
//! the disparity map, and a central finite-difference check of it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    edge_weight, mask_planar, reconstruction_loss, reflect, smoothness_loss, warp_right_to_left, window_stats, SSIM_C1,
    SSIM_C2,
};
use crate::error::{Error, Result};
use crate::types::{DisparityMap, Image, OcclusionMask, Plane};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGrad {
    /// Gradient of the appearance loss.
    pub appearance: Plane,
    /// Gradient of the smoothness loss.
    pub smoothness: Plane,
    /// False where the warp is invalid or the sample sits on a bilinear cell
    /// boundary, where the warp is only one-sided differentiable.
    pub differentiable: Vec<bool>,
    /// `d warped / d disp` per channel, planar.
    warp_slope: Vec<f64>,
}

impl ReconstructionGrad {
    pub fn total(&self) -> Plane {
        let data = self
            .appearance
            .data
            .iter()
            .zip(&self.smoothness.data)
            .map(|(a, s)| a + s)
            .collect();
        Plane {
            width: self.appearance.width,
            height: self.appearance.height,
            data,
        }
    }
}

/// `d(L_ar + L_sm) / d disp` with `L_ar` evaluated against the warp of `r`.
pub fn reconstruction_grad_wrt_disp(
    l: &Image,
    r: &Image,
    disp: &DisparityMap,
    occ: &OcclusionMask,
    alpha: f64,
) -> Result<ReconstructionGrad> {
    let (w, h) = (l.width(), l.height());
    let n = w * h;
    if !l.same_size(r) {
        return Err(Error::shape(l.dims(), r.dims()));
    }
    let (warped, valid) = warp_right_to_left(r, disp)?;
    let count = valid.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::EmptyLossSupport);
    }
    if occ.width != w || occ.height != h {
        return Err(Error::shape(l.dims(), occ.dims()));
    }

    // d warped_c(q) / d disp(q): the warp is linear in x inside a cell, and x = col - disp.
    let mut warp_slope = vec![0.0; 3 * n];
    let mut differentiable = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            let sx = x as f64 - disp.disparity[i];
            let x0 = sx.floor();
            if sx - x0 == 0.0 || x0 + 1.0 > (w - 1) as f64 {
                continue;
            }
            let x0 = x0 as usize;
            for c in 0..3 {
                warp_slope[c * n + i] = -(r.get(c, x0 + 1, y) - r.get(c, x0, y));
            }
            differentiable[i] = true;
        }
    }

    let a = mask_planar(l, occ);
    let b = mask_planar(&warped, occ);
    let inv_n = 1.0 / count as f64;
    // d L_ar / d b_c(q), accumulated by scattering each pixel's window.
    let mut d_b = vec![0.0; 3 * n];
    for c in 0..3 {
        let (ac, bc) = (&a[c * n..(c + 1) * n], &b[c * n..(c + 1) * n]);
        let stats = window_stats(ac, bc, w, h);
        let dst = &mut d_b[c * n..(c + 1) * n];
        let ssim_scale = -alpha / 2.0 / 3.0 * inv_n;
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if !valid[p] {
                    continue;
                }
                let (mx, my) = (stats.mu_x[p], stats.mu_y[p]);
                let n1 = 2.0 * mx * my + SSIM_C1;
                let n2 = 2.0 * stats.cov[p] + SSIM_C2;
                let d1 = mx * mx + my * my + SSIM_C1;
                let d2 = stats.var_x[p] + stats.var_y[p] + SSIM_C2;
                let s = (n1 * n2) / (d1 * d2);
                for dy in -1..=1 {
                    let yy = reflect(y as isize + dy, h);
                    for dx in -1..=1 {
                        let q = yy * w + reflect(x as isize + dx, w);
                        let wq = 1.0 / 9.0;
                        let dn1 = 2.0 * mx * wq;
                        let dn2 = 2.0 * wq * (ac[q] - mx);
                        let dd1 = 2.0 * my * wq;
                        let dd2 = 2.0 * wq * (bc[q] - my);
                        let ds = (dn1 * n2 + n1 * dn2 - s * (dd1 * d2 + d1 * dd2)) / (d1 * d2);
                        dst[q] += ssim_scale * ds;
                    }
                }
                let e = bc[p] - ac[p];
                let sign = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dst[p] += (1.0 - alpha) / 3.0 * inv_n * sign;
            }
        }
    }

    let mut appearance = Plane::zeros(w, h);
    for i in 0..n {
        let keep = 1.0 - occ.values[i];
        appearance.data[i] = (0..3).map(|c| d_b[c * n + i] * keep * warp_slope[c * n + i]).sum();
    }

    Ok(ReconstructionGrad {
        appearance,
        smoothness: smoothness_grad(disp, l),
        differentiable,
        warp_slope,
    })
}

fn smoothness_grad(disp: &DisparityMap, img: &Image) -> Plane {
    let (w, h) = (disp.width, disp.height);
    let mut pairs: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !disp.valid[i] {
                continue;
            }
            if x + 1 < w && disp.valid[i + 1] {
                pairs[0].push((i, i + 1));
            }
            if y + 1 < h && disp.valid[i + w] {
                pairs[1].push((i, i + w));
            }
        }
    }
    let mut grad = Plane::zeros(w, h);
    for list in &pairs {
        if list.is_empty() {
            continue;
        }
        let inv = 1.0 / list.len() as f64;
        for &(i, j) in list {
            let diff = disp.disparity[j] - disp.disparity[i];
            let g = diff.signum() * f64::from(diff != 0.0) * edge_weight(img, i, j) * inv;
            grad.data[j] += g;
            grad.data[i] -= g;
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            probes: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: usize,
    /// Pixels excluded because a kink or cell boundary lies within the step.
    pub excluded: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn objective(l: &Image, r: &Image, disp: &DisparityMap, occ: &OcclusionMask, alpha: f64) -> Result<f64> {
    let (warped, valid) = warp_right_to_left(r, disp)?;
    Ok(reconstruction_loss(l, &warped, occ, &valid, alpha)? + smoothness_loss(disp, l)?)
}

/// Compares the analytic gradient with central differences at randomly chosen
/// pixels whose loss is smooth within `step` of the current disparity.
pub fn gradient_check(
    l: &Image,
    r: &Image,
    disp: &DisparityMap,
    occ: &OcclusionMask,
    alpha: f64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Error::InvalidConfig(format!("step must be > 0, got {}", cfg.step)));
    }
    let grad = reconstruction_grad_wrt_disp(l, r, disp, occ, alpha)?;
    let total = grad.total();
    let (w, h) = (l.width(), l.height());
    let n = w * h;
    let (warped, _) = warp_right_to_left(r, disp)?;
    let margin = 2.0 * cfg.step;

    let smooth_at = |i: usize| -> bool {
        if !grad.differentiable[i] {
            return false;
        }
        let sx = (i % w) as f64 - disp.disparity[i];
        let frac = sx - sx.floor();
        if frac < margin || frac > 1.0 - margin {
            return false;
        }
        // L1 kink: the masked residual must keep its sign across the step.
        let keep = 1.0 - occ.values[i];
        for c in 0..3 {
            let resid = keep * (warped.data()[c * n + i] - l.data()[c * n + i]);
            let reach = keep * grad.warp_slope[c * n + i].abs() * margin;
            if resid.abs() <= reach {
                return false;
            }
        }
        // smoothness kink: no neighbor disparity within the step
        let (x, y) = (i % w, i / w);
        let neighbours = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        neighbours
            .into_iter()
            .flatten()
            .filter(|&j| disp.valid[j])
            .all(|j| (disp.disparity[j] - disp.disparity[i]).abs() > margin)
    };

    let mut eligible: Vec<usize> = (0..n).filter(|&i| smooth_at(i)).collect();
    let excluded = n - eligible.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(cfg.probes);
    if eligible.is_empty() {
        return Err(Error::EmptySupport("no smooth probe pixels for the gradient check"));
    }

    let mut errors = Vec::with_capacity(eligible.len());
    let mut probe = disp.clone();
    for &i in &eligible {
        let d0 = disp.disparity[i];
        probe.disparity[i] = d0 + cfg.step;
        let plus = objective(l, r, &probe, occ, alpha)?;
        probe.disparity[i] = d0 - cfg.step;
        let minus = objective(l, r, &probe, occ, alpha)?;
        probe.disparity[i] = d0;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        errors.push(relative_error(total.data[i], numeric));
    }
    Ok(GradCheckReport {
        probes: errors.len(),
        excluded,
        max_rel_error: errors.iter().copied().fold(0.0, f64::max),
        mean_rel_error: errors.iter().sum::<f64>() / errors.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MaskKind;
    use rand::Rng;

    fn textured(rng: &mut impl Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _, _| rng.random::<f64>()).unwrap()
    }

    fn fractional_disp(rng: &mut impl Rng, w: usize, h: usize) -> DisparityMap {
        DisparityMap::from_values(w, h, (0..w * h).map(|_| rng.random_range(2.1..5.9)).collect()).unwrap()
    }

    #[test]
    fn constant_image_has_zero_appearance_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let img = Image::filled(16, 10, [0.6, 0.3, 0.2]).unwrap();
        let disp = fractional_disp(&mut rng, 16, 10);
        let occ = OcclusionMask::zeros(16, 10, MaskKind::Soft);
        let g = reconstruction_grad_wrt_disp(&img, &img, &disp, &occ, 0.85).unwrap();
        assert!(g.appearance.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_photometric_error_region_is_stationary() {
        // dyadic horizontal ramps make the half-pixel interpolation exact, so
        // the residual is exactly zero and L1 and SSIM sit at their optimum
        let (w, h) = (24, 12);
        let ramp = |c: usize, x: f64, y: usize| (4.0 + y as f64 + c as f64 + x) / 64.0;
        let right = Image::from_fn(w, h, |c, x, y| ramp(c, x as f64, y)).unwrap();
        let left = Image::from_fn(w, h, |c, x, y| ramp(c, x as f64 - 3.5, y)).unwrap();
        let disp = DisparityMap::constant(w, h, 3.5);
        let occ = OcclusionMask::zeros(w, h, MaskKind::Soft);
        let g = reconstruction_grad_wrt_disp(&left, &right, &disp, &occ, 0.85).unwrap();
        // columns 0..4 fall outside the frame; windows touching them see zeros
        for y in 0..h {
            for x in 6..w {
                assert!(g.differentiable[y * w + x]);
                assert!(
                    g.appearance.get(x, y).abs() < 1e-15,
                    "({x},{y}) {}",
                    g.appearance.get(x, y)
                );
            }
        }
    }

    #[test]
    fn matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let (w, h) = (32, 20);
        let l = textured(&mut rng, w, h);
        let r = textured(&mut rng, w, h);
        let disp = fractional_disp(&mut rng, w, h);
        let occ = OcclusionMask::soft(w, h, (0..w * h).map(|_| rng.random_range(0.0..0.5)).collect()).unwrap();
        let report = gradient_check(&l, &r, &disp, &occ, 0.85, &GradCheckConfig::default()).unwrap();
        assert_eq!(report.probes, 100);
        assert!(report.max_rel_error <= 1e-3, "{report:?}");
    }

    #[test]
    fn lattice_samples_are_not_differentiable() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let img = textured(&mut rng, 10, 4);
        let occ = OcclusionMask::zeros(10, 4, MaskKind::Soft);
        let g = reconstruction_grad_wrt_disp(&img, &img, &DisparityMap::constant(10, 4, 2.0), &occ, 0.85).unwrap();
        assert!(g.differentiable.iter().all(|v| !v));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }
}

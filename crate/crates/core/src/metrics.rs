//! Evaluation metrics: bad-pixel rate, the depth-binned absolute relative
//! difference curve with its global summary, and per-class matching rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DisparityMap;

/// Focal length times baseline of a KITTI-style rig (721.5377 px x 0.54 m).
pub const DEFAULT_FOCAL_BASELINE: f64 = 721.5377 * 0.54;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    /// Center of the range in meters.
    pub k: f64,
    /// Half-width of the range in meters.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pixel_threshold: f64,
    /// Converts disparity to depth via `z = fB / d`.
    pub focal_times_baseline: f64,
    pub depth_bins: Vec<DepthBin>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pixel_threshold: 3.0,
            focal_times_baseline: DEFAULT_FOCAL_BASELINE,
            depth_bins: default_depth_bins(),
        }
    }
}

/// Centers 5, 10, ..., 80 m with a 2.5 m half-width.
pub fn default_depth_bins() -> Vec<DepthBin> {
    (1..=16)
        .map(|i| DepthBin {
            k: 5.0 * i as f64,
            r: 2.5,
        })
        .collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pixel_threshold.is_nan() || self.pixel_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "threshold must be > 0, got {}",
                self.pixel_threshold
            )));
        }
        if !(self.focal_times_baseline > 0.0 && self.focal_times_baseline.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fB must be > 0, got {}",
                self.focal_times_baseline
            )));
        }
        if self.depth_bins.is_empty() {
            return Err(Error::InvalidConfig("no depth bins".into()));
        }
        Ok(())
    }
}

fn support(pred: &DisparityMap, gt: &DisparityMap, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    if !pred.same_size(gt) {
        return Err(Error::shape(pred.dims(), gt.dims()));
    }
    if let Some(m) = mask {
        if m.len() != gt.disparity.len() {
            return Err(Error::InvalidDimensions(format!(
                "mask has {} entries for a {} map",
                m.len(),
                gt.dims()
            )));
        }
    }
    let idx: Vec<usize> = (0..gt.disparity.len())
        .filter(|&i| pred.valid[i] && gt.valid[i] && mask.is_none_or(|m| m[i]))
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptySupport("no pixel is valid in both maps"));
    }
    Ok(idx)
}

#[inline]
fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// Percentage of jointly valid pixels whose error exceeds `threshold`.
pub fn d1_error(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<f64> {
    d1_error_masked(pred, gt, threshold, None)
}

/// [`d1_error`] restricted to pixels where `mask` is true.
pub fn d1_error_masked(pred: &DisparityMap, gt: &DisparityMap, threshold: f64, mask: Option<&[bool]>) -> Result<f64> {
    let idx = support(pred, gt, mask)?;
    let bad = idx
        .iter()
        .filter(|&&i| (pred.disparity[i] - gt.disparity[i]).abs() > threshold)
        .count();
    Ok(percent(bad, idx.len()))
}

/// Percentage of jointly valid pixels within `threshold`, over all classes.
pub fn match_rate(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<f64> {
    let idx = support(pred, gt, None)?;
    let good = idx
        .iter()
        .filter(|&&i| (pred.disparity[i] - gt.disparity[i]).abs() <= threshold)
        .count();
    Ok(percent(good, idx.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArdPoint {
    pub k: f64,
    /// Mean relative disparity error in percent; `None` for an empty bin.
    pub ard: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdCurve {
    pub points: Vec<ArdPoint>,
    /// Unweighted mean of the non-empty bins.
    pub gd: f64,
}

/// Bins pixels by ground-truth depth `fB / d_gt` into `[k - r, k + r]` (both
/// ends inclusive, so a pixel on a shared edge counts in both bins) and
/// averages `|d_pred - d_gt| / d_gt` per bin.
pub fn ard_curve(pred: &DisparityMap, gt: &DisparityMap, cfg: &EvalConfig) -> Result<ArdCurve> {
    cfg.validate()?;
    let idx = support(pred, gt, None)?;
    let mut sums = vec![0.0; cfg.depth_bins.len()];
    let mut counts = vec![0usize; cfg.depth_bins.len()];
    for i in idx {
        let dg = gt.disparity[i];
        if dg <= 0.0 {
            continue;
        }
        let z = cfg.focal_times_baseline / dg;
        let rel = (pred.disparity[i] - dg).abs() / dg;
        for (b, bin) in cfg.depth_bins.iter().enumerate() {
            if z >= bin.k - bin.r && z <= bin.k + bin.r {
                sums[b] += rel;
                counts[b] += 1;
            }
        }
    }
    let points: Vec<ArdPoint> = cfg
        .depth_bins
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(bin, (s, &n))| ArdPoint {
            k: bin.k,
            ard: (n > 0).then(|| 100.0 * s / n as f64),
            count: n,
        })
        .collect();
    let filled: Vec<f64> = points.iter().filter_map(|p| p.ard).collect();
    if filled.is_empty() {
        return Err(Error::EmptySupport("every depth bin is empty"));
    }
    let gd = filled.iter().sum::<f64>() / filled.len() as f64;
    Ok(ArdCurve { points, gd })
}

pub const DEFAULT_CLASS_NAMES: [&str; 6] = ["vehicle", "human", "ground", "construction", "nature", "others"];

/// Per-pixel semantic class ids with a name table.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u16>,
    pub names: BTreeMap<u16, String>,
}

impl SemanticMap {
    /// Uses the six default class names for ids `0..6`.
    pub fn new(width: usize, height: usize, ids: Vec<u16>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "{} class ids for a {width}x{height} raster",
                ids.len()
            )));
        }
        let names = DEFAULT_CLASS_NAMES
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u16, n.to_string()))
            .collect();
        Ok(Self {
            width,
            height,
            ids,
            names,
        })
    }

    pub fn name(&self, id: u16) -> String {
        self.names.get(&id).cloned().unwrap_or_else(|| format!("class_{id}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRate {
    pub id: u16,
    pub name: String,
    pub rate: f64,
    pub count: usize,
}

/// Percentage of jointly valid pixels within `threshold`, per class. Classes
/// without valid pixels are omitted; output is ordered by class id.
pub fn matching_rate(
    pred: &DisparityMap,
    gt: &DisparityMap,
    sem: &SemanticMap,
    threshold: f64,
) -> Result<Vec<ClassRate>> {
    if !pred.same_size(gt) {
        return Err(Error::shape(pred.dims(), gt.dims()));
    }
    if sem.width != gt.width || sem.height != gt.height {
        return Err(Error::shape(gt.dims(), format!("{}x{}", sem.width, sem.height)));
    }
    let mut tally: BTreeMap<u16, (usize, usize)> = BTreeMap::new();
    for i in 0..gt.disparity.len() {
        if !(pred.valid[i] && gt.valid[i]) {
            continue;
        }
        let entry = tally.entry(sem.ids[i]).or_default();
        entry.1 += 1;
        if (pred.disparity[i] - gt.disparity[i]).abs() <= threshold {
            entry.0 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(id, (good, n))| ClassRate {
            id,
            name: sem.name(id),
            rate: percent(good, n),
            count: n,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub d1: f64,
    /// `(threshold, percentage)` for each extra bad-pixel threshold.
    pub bad: Vec<(f64, f64)>,
    pub ard_curve: Vec<ArdPoint>,
    pub gd: Option<f64>,
    pub mr_per_class: Vec<ClassRate>,
}

/// Computes the full report. The ARD curve is left empty when no pixel falls
/// into any depth bin, and MR is skipped without a semantic map.
pub fn evaluate(
    pred: &DisparityMap,
    gt: &DisparityMap,
    sem: Option<&SemanticMap>,
    cfg: &EvalConfig,
    extra_thresholds: &[f64],
) -> Result<MetricReport> {
    cfg.validate()?;
    let d1 = d1_error(pred, gt, cfg.pixel_threshold)?;
    let bad = extra_thresholds
        .iter()
        .map(|&t| d1_error(pred, gt, t).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    let (ard, gd) = match ard_curve(pred, gt, cfg) {
        Ok(c) => (c.points, Some(c.gd)),
        Err(Error::EmptySupport(_)) => (Vec::new(), None),
        Err(e) => return Err(e),
    };
    let mr = match sem {
        Some(s) => matching_rate(pred, gt, s, cfg.pixel_threshold)?,
        None => Vec::new(),
    };
    Ok(MetricReport {
        threshold: cfg.pixel_threshold,
        d1,
        bad,
        ard_curve: ard,
        gd,
        mr_per_class: mr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(values: Vec<f64>) -> DisparityMap {
        let n = values.len();
        DisparityMap::from_values(n, 1, values).unwrap()
    }

    #[test]
    fn d1_counting() {
        let gt = map(vec![10.0; 8]);
        assert_eq!(d1_error(&gt, &gt, 3.0).unwrap(), 0.0);
        assert_eq!(d1_error(&map(vec![14.0; 8]), &gt, 3.0).unwrap(), 100.0);
        let half = map((0..8).map(|i| if i % 2 == 0 { 14.0 } else { 10.0 }).collect());
        assert_eq!(d1_error(&half, &gt, 3.0).unwrap(), 50.0);
        // exactly at the threshold is not an error
        assert_eq!(d1_error(&map(vec![13.0; 8]), &gt, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn d1_empty_support_errors() {
        let mut gt = map(vec![1.0; 4]);
        gt.valid = vec![false; 4];
        assert!(matches!(d1_error(&gt, &gt, 3.0), Err(Error::EmptySupport(_))));
    }

    #[test]
    fn d1_mask_restricts_support() {
        let gt = map(vec![10.0; 4]);
        let pred = map(vec![20.0, 10.0, 10.0, 10.0]);
        let mask = [false, true, true, true];
        assert_eq!(d1_error_masked(&pred, &gt, 3.0, Some(&mask)).unwrap(), 0.0);
    }

    #[test]
    fn complementary_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let n = rng.random_range(1..500);
            let gt = map((0..n).map(|_| rng.random_range(1.0..50.0)).collect());
            let pred = map(gt.disparity.iter().map(|d| d + rng.random_range(-6.0..6.0)).collect());
            let d1 = d1_error(&pred, &gt, 3.0).unwrap();
            let mr = match_rate(&pred, &gt, 3.0).unwrap();
            assert_eq!(d1 + mr, 100.0);
        }
    }

    /// Independent counting: bins each pixel with its own depth loop.
    fn ard_oracle(pred: &DisparityMap, gt: &DisparityMap, fb: f64, bins: &[DepthBin]) -> (Vec<(f64, usize)>, f64) {
        let mut out = Vec::new();
        for bin in bins {
            let mut s = 0.0;
            let mut n = 0;
            for i in 0..gt.disparity.len() {
                if !(gt.valid[i] && pred.valid[i]) {
                    continue;
                }
                let z = fb / gt.disparity[i];
                if (bin.k - bin.r..=bin.k + bin.r).contains(&z) {
                    s += (pred.disparity[i] - gt.disparity[i]).abs() / gt.disparity[i];
                    n += 1;
                }
            }
            out.push((if n > 0 { 100.0 * s / n as f64 } else { f64::NAN }, n));
        }
        let filled: Vec<f64> = out.iter().filter(|(_, n)| *n > 0).map(|(a, _)| *a).collect();
        let gd = filled.iter().sum::<f64>() / filled.len() as f64;
        (out, gd)
    }

    #[test]
    fn ard_identity_and_uniform_error() {
        let cfg = EvalConfig::default();
        let fb = cfg.focal_times_baseline;
        // depths 3..85 m
        let gt = map((3..86).map(|z| fb / z as f64).collect());
        let c = ard_curve(&gt, &gt, &cfg).unwrap();
        assert_eq!(c.gd, 0.0);
        let pred = map(gt.disparity.iter().map(|d| 1.1 * d).collect());
        let c = ard_curve(&pred, &gt, &cfg).unwrap();
        for p in &c.points {
            assert!((p.ard.unwrap() - 10.0).abs() < 1e-9);
        }
        assert!((c.gd - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ard_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let cfg = EvalConfig::default();
        let fb = cfg.focal_times_baseline;
        // strata at a few depths, leaving some bins empty
        let strata = [6.0, 7.5, 21.0, 40.0, 44.0, 79.0];
        let gt = map((0..600).map(|i| fb / strata[i % strata.len()]).collect());
        let pred = map(gt.disparity.iter().map(|d| d * rng.random_range(0.8..1.2)).collect());
        let c = ard_curve(&pred, &gt, &cfg).unwrap();
        let (expect, gd) = ard_oracle(&pred, &gt, fb, &cfg.depth_bins);
        for (p, (a, n)) in c.points.iter().zip(&expect) {
            assert_eq!(p.count, *n);
            match p.ard {
                Some(v) => assert_eq!(v, *a),
                None => assert_eq!(*n, 0),
            }
        }
        assert_eq!(c.gd, gd);
        // 7.5 m sits on the edge shared by the 5 m and 10 m bins
        assert_eq!(c.points[0].count, 200);
        assert_eq!(c.points[1].count, 100);
    }

    #[test]
    fn ard_invariant_to_rescaling_with_compensating_fb() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let cfg = EvalConfig::default();
        let gt = map((0..300).map(|_| rng.random_range(5.0..80.0)).collect());
        let pred = map(gt.disparity.iter().map(|d| d + rng.random_range(-2.0..2.0)).collect());
        let s = 4.0;
        let scaled_cfg = EvalConfig {
            focal_times_baseline: cfg.focal_times_baseline * s,
            ..cfg.clone()
        };
        let a = ard_curve(&pred, &gt, &cfg).unwrap();
        let b = ard_curve(
            &map(pred.disparity.iter().map(|d| d * s).collect()),
            &map(gt.disparity.iter().map(|d| d * s).collect()),
            &scaled_cfg,
        )
        .unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.count, q.count);
            if let (Some(x), Some(y)) = (p.ard, q.ard) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ard_all_empty_errors() {
        let gt = map(vec![1e-3; 4]);
        assert!(ard_curve(&gt, &gt, &EvalConfig::default()).is_err());
    }

    #[test]
    fn mr_per_class() {
        let gt = map(vec![10.0; 6]);
        let pred = map(vec![10.0, 14.0, 14.0, 10.0, 11.0, 10.0]);
        let sem = SemanticMap::new(6, 1, vec![0, 1, 1, 2, 2, 9]).unwrap();
        let rates = matching_rate(&pred, &gt, &sem, 3.0).unwrap();
        let by_name: Vec<(String, f64)> = rates.iter().map(|r| (r.name.clone(), r.rate)).collect();
        assert_eq!(
            by_name,
            vec![
                ("vehicle".into(), 100.0),
                ("human".into(), 0.0),
                ("ground".into(), 100.0),
                ("class_9".into(), 100.0)
            ]
        );
    }

    #[test]
    fn mr_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let n = 400;
        let gt = map((0..n).map(|_| rng.random_range(1.0..60.0)).collect());
        let pred = map(gt.disparity.iter().map(|d| d + rng.random_range(-5.0..5.0)).collect());
        let sem = SemanticMap::new(n, 1, (0..n).map(|_| rng.random_range(0..6)).collect()).unwrap();
        let rates = matching_rate(&pred, &gt, &sem, 3.0).unwrap();
        for r in rates {
            let members: Vec<usize> = (0..n).filter(|&i| sem.ids[i] == r.id && pred.valid[i]).collect();
            let good = members
                .iter()
                .filter(|&&i| (pred.disparity[i] - gt.disparity[i]).abs() <= 3.0)
                .count();
            assert_eq!(r.count, members.len());
            assert_eq!(r.rate, 100.0 * good as f64 / members.len() as f64);
        }
    }

    #[test]
    fn report_for_identity() {
        let cfg = EvalConfig::default();
        let gt = map((3..86).map(|z| cfg.focal_times_baseline / z as f64).collect());
        let r = evaluate(&gt, &gt, None, &cfg, &[1.0, 2.0]).unwrap();
        assert_eq!(r.d1, 0.0);
        assert_eq!(r.gd, Some(0.0));
        assert_eq!(r.bad, vec![(1.0, 0.0), (2.0, 0.0)]);
    }
}

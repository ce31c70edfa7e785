use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    CostHistArgs, EvalArgs, GradcheckArgs, LossesArgs, ReportFormat, StereoArgs, StereoOptions, SynthArgs, TransferArgs,
};
use crate::color::{image_stats, momentum_update, transfer_pair, TransferState};
use crate::costnorm::cost_normalize;
use crate::costvolume::{correlation_volume, cost_histogram};
use crate::dataio::{self, list_pairs, DatasetSpec, PairEntry};
use crate::disparity::{bce_loss, smooth_l1_loss, RegressionConfig};
use crate::error::Error;
use crate::features::{extract_features, FeatureConfig};
use crate::metrics::{default_depth_bins, evaluate, EvalConfig};
use crate::pipeline::{run_stereo, StereoConfig};
use crate::reconstruction::{
    gradient_check, occlusion_oracle, occlusion_regularizer, reconstruction_loss, smoothness_loss, total_loss,
    warp_right_to_left, GradCheckConfig, LossParts, LossWeights,
};
use crate::report;
use crate::types::{DisparityMap, MaskKind, OcclusionMask};

pub(super) struct Context {
    pub seed: u64,
    pub format: ReportFormat,
    pub out_dir: PathBuf,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Error> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    /// Writes `name.csv` from `csv`, or `name.json` from `value`.
    fn report<T: Serialize>(&self, name: &str, csv: impl FnOnce() -> String, value: &T) -> Result<PathBuf, Error> {
        match self.format {
            ReportFormat::Csv => self.write(&format!("{name}.csv"), &csv()),
            ReportFormat::Json => self.write(&format!("{name}.json"), &report::to_json(value)),
        }
    }
}

/// A numerical check ran but did not meet its tolerance.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub(super) struct CheckFailed(pub String);

fn stereo_config(o: &StereoOptions) -> StereoConfig {
    let norm = o.cost_norm.config();
    StereoConfig {
        features: FeatureConfig {
            downsample: o.downsample,
            census_window: o.census_window,
            ..FeatureConfig::default()
        },
        norm,
        d_max: o.d_max,
        regression: RegressionConfig {
            mode: o.mode,
            beta: o.beta,
            aggregation_radius: o.agg_radius,
        },
    }
}

fn create_parent(path: &Path) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn rel_name(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root).unwrap_or(path).to_path_buf()
}

/// Flattens a relative path into one file stem: `a/b/c.png` becomes `a_b_c`.
fn flat_stem(rel: &Path) -> String {
    let no_ext = rel.with_extension("");
    no_ext
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Serialize)]
struct TransferRow {
    iteration: usize,
    source: String,
    target: String,
    mean: [f64; 3],
    std: [f64; 3],
}

pub(super) fn transfer(ctx: &Context, a: &TransferArgs) -> anyhow::Result<()> {
    let mut state = TransferState::new(a.gamma, a.space)?;
    let source = list_pairs(&DatasetSpec {
        layout: a.layout,
        root: a.source.clone(),
    })?;
    let target = list_pairs(&DatasetSpec {
        layout: a.target_layout.unwrap_or(a.layout),
        root: a.target.clone(),
    })?;
    if source.pairs.is_empty() || target.pairs.is_empty() {
        return Err(Error::EmptySupport("transfer needs at least one source and one target pair").into());
    }
    // Both listings are shuffled by copies of one seeded generator, so equal
    // listings get the same order and a directory transferred onto itself pairs
    // every image with itself.
    let rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut src: Vec<&PairEntry> = source.pairs.iter().collect();
    let mut tgt: Vec<&PairEntry> = target.pairs.iter().collect();
    src.shuffle(&mut rng.clone());
    tgt.shuffle(&mut rng.clone());

    let iterations = a.iterations.unwrap_or(src.len());
    let out_root = ctx.out_dir.join("transferred");
    let mut rows = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let s = src[i % src.len()];
        let t = tgt[i % tgt.len()];
        let target_img = dataio::load_image(&t.left)?;
        state = momentum_update(state, &image_stats(&target_img, a.space));
        let left = dataio::load_image(&s.left)?;
        let right = dataio::load_image(&s.right)?;
        let out = transfer_pair(&left, &right, &state)?;
        for (img, path) in [(&out.left, &s.left), (&out.right, &s.right)] {
            let dst = out_root.join(rel_name(&a.source, path)).with_extension("png");
            create_parent(&dst)?;
            dataio::save_image(&dst, img)?;
        }
        log::info!("iteration {i}: {} <- {}", s.left.display(), t.left.display());
        rows.push(TransferRow {
            iteration: i,
            source: rel_name(&a.source, &s.left).display().to_string(),
            target: rel_name(&a.target, &t.left).display().to_string(),
            mean: state.running_mean,
            std: state.running_std,
        });
    }
    let csv = || {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "iteration",
            "source",
            "target",
            "mu_0",
            "mu_1",
            "mu_2",
            "sigma_0",
            "sigma_1",
            "sigma_2",
        ])
        .expect("writing to memory");
        for r in &rows {
            let mut rec = vec![r.iteration.to_string(), r.source.clone(), r.target.clone()];
            rec.extend(r.mean.iter().chain(&r.std).map(|v| format!("{v:?}")));
            w.write_record(&rec).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("utf-8")
    };
    let path = ctx.report("transfer_stats", csv, &rows)?;
    println!(
        "pairs={} skipped={} stats={}",
        rows.len(),
        source.skipped,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StereoRow {
    name: String,
    cost_norm: String,
    mode: String,
    d_max: usize,
    time_ms: f64,
}

pub(super) fn stereo(ctx: &Context, a: &StereoArgs) -> anyhow::Result<()> {
    let cfg = stereo_config(&a.opts);
    let pairs: Vec<(String, PathBuf, PathBuf)> = match (&a.left, &a.right, &a.dataset) {
        (Some(l), Some(r), None) => vec![(
            flat_stem(Path::new(l.file_name().unwrap_or_default())),
            l.clone(),
            r.clone(),
        )],
        (None, None, Some(root)) => {
            let listing = list_pairs(&DatasetSpec {
                layout: a.layout,
                root: root.clone(),
            })?;
            listing
                .pairs
                .into_iter()
                .map(|p| (flat_stem(&rel_name(root, &p.left)), p.left, p.right))
                .collect()
        }
        _ => anyhow::bail!(Error::InvalidConfig(
            "give either --left and --right, or --dataset".into()
        )),
    };
    let mut rows = Vec::new();
    for (name, l, r) in pairs {
        let left = dataio::load_image(&l)?;
        let right = dataio::load_image(&r)?;
        let out = run_stereo(&left, &right, &cfg).with_context(|| format!("pair {name}"))?;
        dataio::write_disparity_pfm(&ctx.out_dir.join(format!("{name}.pfm")), &out.disparity)?;
        if a.preview {
            let max = (cfg.d_max * cfg.features.downsample) as f64;
            dataio::save_disparity_preview(&ctx.out_dir.join(format!("{name}_preview.png")), &out.disparity, max)?;
        }
        let time_ms = out.timings.total().as_secs_f64() * 1e3;
        println!(
            "pair={name} cost_norm={} mode={} d_max={} time_ms={time_ms:.1}",
            a.opts.cost_norm, a.opts.mode, cfg.d_max
        );
        rows.push(StereoRow {
            name,
            cost_norm: a.opts.cost_norm.to_string(),
            mode: a.opts.mode.to_string(),
            d_max: cfg.d_max,
            time_ms,
        });
    }
    let csv = || {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("utf-8")
    };
    ctx.report("stereo_report", csv, &rows)?;
    Ok(())
}

pub(super) fn cost_hist(ctx: &Context, a: &CostHistArgs) -> anyhow::Result<()> {
    let cfg = stereo_config(&a.opts);
    let left = dataio::load_image(&a.left)?;
    let right = dataio::load_image(&a.right)?;
    if !left.same_size(&right) {
        return Err(Error::shape(left.dims(), right.dims()).into());
    }
    let fl = extract_features(&left, &cfg.features)?;
    let fr = extract_features(&right, &cfg.features)?;
    let (nl, nr) = cost_normalize(&fl, &fr, &cfg.norm)?;
    let hist = cost_histogram(&correlation_volume(&nl, &nr, cfg.d_max)?)?;
    let path = ctx.report("cost_hist", || report::histogram_csv(&hist), &hist)?;
    println!(
        "cost_norm={} in_range={} underflow={} overflow={} report={}",
        a.opts.cost_norm,
        hist.in_range(),
        hist.underflow,
        hist.overflow,
        path.display()
    );
    Ok(())
}

pub(super) fn eval(ctx: &Context, a: &EvalArgs) -> anyhow::Result<()> {
    let pred = dataio::read_disparity(&a.pred)?;
    let gt = dataio::read_disparity(&a.gt)?;
    let sem = a.semantic.as_deref().map(dataio::read_semantic).transpose()?;
    let cfg = EvalConfig {
        pixel_threshold: a.threshold,
        focal_times_baseline: a.fb,
        depth_bins: default_depth_bins(),
    };
    let r = evaluate(&pred, &gt, sem.as_ref(), &cfg, &a.bad)?;
    match ctx.format {
        ReportFormat::Csv => {
            ctx.write("metrics.csv", &report::metrics_csv(&r))?;
            ctx.write("ard.csv", &report::ard_csv(&r.ard_curve))?;
            if sem.is_some() {
                ctx.write("mr.csv", &report::mr_csv(&r.mr_per_class))?;
            }
        }
        ReportFormat::Json => {
            ctx.write("metrics.json", &report::to_json(&r))?;
        }
    }
    match r.gd {
        Some(gd) => println!("d1={:?} gd={gd:?}", r.d1),
        None => println!("d1={:?} gd=none", r.d1),
    }
    Ok(())
}

pub(super) fn losses(ctx: &Context, a: &LossesArgs) -> anyhow::Result<()> {
    let weights = LossWeights {
        w_s_occ: a.w_s_occ,
        w_t_ar: a.w_t_ar,
        w_t_occ: a.w_t_occ,
        w_t_sm: a.w_t_sm,
        alpha: a.alpha,
    };
    weights.validate()?;
    let left = dataio::load_image(&a.left)?;
    let right = dataio::load_image(&a.right)?;
    let disp = dataio::read_disparity(&a.disp)?;
    let occ = match &a.occ {
        Some(p) => dataio::read_occlusion(p)?,
        None => OcclusionMask::zeros(left.width(), left.height(), MaskKind::Soft),
    };
    let (warped, valid) = warp_right_to_left(&right, &disp)?;
    let mut parts = LossParts {
        l_t_ar: reconstruction_loss(&left, &warped, &occ, &valid, weights.alpha)?,
        l_t_occ: occlusion_regularizer(&occ),
        l_t_sm: smoothness_loss(&disp, &left)?,
        ..LossParts::default()
    };
    if let Some(p) = &a.gt {
        let gt = dataio::read_disparity(p)?;
        parts.l_s_main = smooth_l1_loss(&disp, &gt)?;
        parts.l_s_occ = bce_loss(&occ, &occlusion_oracle(&gt))?;
    }
    let b = total_loss(&parts, &weights)?;
    let text = report::loss_lines(&b);
    print!("{text}");
    ctx.write("losses.txt", &text)?;
    if ctx.format == ReportFormat::Json {
        ctx.write("losses.json", &report::to_json(&b))?;
    }
    Ok(())
}

pub(super) fn gradcheck(ctx: &Context, a: &GradcheckArgs) -> anyhow::Result<()> {
    let (left, right, disp, occ) = match (&a.left, &a.right, &a.disp) {
        (Some(l), Some(r), Some(d)) => {
            let left = dataio::load_image(l)?;
            let occ = match &a.occ {
                Some(p) => dataio::read_occlusion(p)?,
                None => OcclusionMask::zeros(left.width(), left.height(), MaskKind::Soft),
            };
            (left, dataio::load_image(r)?, dataio::read_disparity(d)?, occ)
        }
        _ => {
            let pair = dataio::synth_rds(a.width, a.height, a.shift, None, ctx.seed)?;
            // move every sample off the pixel lattice so the warp is differentiable
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x9e37_79b9_7f4a_7c15);
            let offsets: Vec<f64> = (0..pair.gt_disp.disparity.len())
                .map(|_| rng.random_range(0.1..0.9))
                .collect();
            let disp = DisparityMap {
                disparity: pair
                    .gt_disp
                    .disparity
                    .iter()
                    .zip(&offsets)
                    .map(|(d, o)| d + o)
                    .collect(),
                ..pair.gt_disp.clone()
            };
            let occ = pair.gt_occ.clone().into_soft();
            (pair.left, pair.right, disp, occ)
        }
    };
    let cfg = GradCheckConfig {
        step: a.step,
        probes: a.probes,
        seed: ctx.seed,
    };
    let r = gradient_check(&left, &right, &disp, &occ, a.alpha, &cfg)?;
    let text = report::gradcheck_lines(&r);
    print!("{text}");
    ctx.write("gradcheck.txt", &text)?;
    if ctx.format == ReportFormat::Json {
        ctx.write("gradcheck.json", &report::to_json(&r))?;
    }
    if r.max_rel_error > a.tolerance {
        return Err(CheckFailed(format!(
            "max relative error {:e} exceeds tolerance {:e}",
            r.max_rel_error, a.tolerance
        ))
        .into());
    }
    Ok(())
}

pub(super) fn synth(ctx: &Context, a: &SynthArgs) -> anyhow::Result<()> {
    let p = dataio::synth_rds(a.width, a.height, a.shift, None, ctx.seed)?;
    dataio::save_image(&ctx.out_dir.join("left.png"), &p.left)?;
    dataio::save_image(&ctx.out_dir.join("right.png"), &p.right)?;
    dataio::write_disparity_pfm(&ctx.out_dir.join("disp.pfm"), &p.gt_disp)?;
    dataio::save_occlusion(&ctx.out_dir.join("occ.png"), &p.gt_occ)?;
    println!(
        "width={} height={} shift={} foreground={},{},{},{}",
        a.width, a.height, a.shift, p.foreground.x, p.foreground.y, p.foreground.width, p.foreground.height
    );
    Ok(())
}

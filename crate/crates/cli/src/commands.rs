use crate::config::{self, Overrides};
use crate::error::{CliError, CliResult};
use crate::io;
use colorseg::eval::{dataset_score, match_shadow_first, DatasetScore, GroundTruth, MatchResult, SegmentMatch, ShadowMatch};
use colorseg::pipeline::{segment_image, PipelineConfig, StepReport};
use colorseg::synth::{self, SceneSpec};
use colorseg::{LabelMap, RgbImage};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRIC_NOTE: &str = "normalised = (1/K) * sum_k 2*min(IoU_k, 0.5) over all K annotated segments, \
unmatched segments count 0; literal_sum = sum_k min(IoU_k, 0.5)";

#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub input: String,
    pub width: usize,
    pub height: usize,
    pub preset: String,
    pub config: PipelineConfig,
    pub steps: Vec<StepReport>,
    pub final_segments: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelSidecar {
    pub width: usize,
    pub height: usize,
    pub segment_count: usize,
    pub preset: String,
    pub config: PipelineConfig,
}

pub struct SegmentJob<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub report: Option<&'a Path>,
    pub preset: Option<&'a str>,
    pub config_file: Option<&'a Path>,
    pub overrides: &'a Overrides,
}

pub fn segment(job: &SegmentJob) -> CliResult<SegmentReport> {
    let cfg = config::resolve(job.preset, job.config_file, job.overrides)?;
    let image = io::read_rgb(job.input)?;
    log::info!("segmenting {} ({}x{})", job.input.display(), image.width(), image.height());
    let start = Instant::now();
    let seg = segment_image(&image, &cfg)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let preset = job.preset.unwrap_or(colorseg::pipeline::PRESET_NAMES[0]).to_string();

    io::write_labels(job.output, &seg.labels)?;
    io::write_json(
        &io::sidecar_path(job.output),
        &LabelSidecar {
            width: image.width(),
            height: image.height(),
            segment_count: seg.labels.segment_count(),
            preset: preset.clone(),
            config: cfg.clone(),
        },
    )?;
    let report = SegmentReport {
        input: job.input.display().to_string(),
        width: image.width(),
        height: image.height(),
        preset,
        config: cfg,
        steps: seg.report.steps,
        final_segments: seg.report.final_segments,
        wall_time_ms,
    };
    if let Some(path) = job.report {
        io::write_json(path, &report)?;
    }
    log::info!("{} segments in {:.1} ms", report.final_segments, wall_time_ms);
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ImageEval {
    pub stem: String,
    /// normalised score of this image alone
    pub miou: Option<f64>,
    pub literal_sum: f64,
    pub gt_segments: usize,
    pub shadow_matches: usize,
    pub pairs: Vec<SegmentMatch>,
    pub shadow_pairs: Vec<ShadowMatch>,
    pub unmatched: Vec<u32>,
}

impl ImageEval {
    fn new(stem: String, r: &MatchResult) -> Self {
        Self {
            stem,
            miou: r.score(),
            literal_sum: r.literal_sum(),
            gt_segments: r.gt_segments,
            shadow_matches: r.shadow_pairs.len(),
            pairs: r.pairs.clone(),
            shadow_pairs: r.shadow_pairs.clone(),
            unmatched: r.unmatched.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub dataset: DatasetScore,
    pub images: Vec<ImageEval>,
    /// stems present in only one of the two directories
    pub skipped: Vec<String>,
}

/// Runs `f` on a rayon pool capped by `COLORSEG_THREADS` when set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    #[cfg(feature = "parallel")]
    {
        let threads = match std::env::var("COLORSEG_THREADS") {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("COLORSEG_THREADS = `{v}` is not a thread count")))?,
            Err(_) => 0,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    Ok(f())
}

fn pair_stems(pred: &Path, gt: &Path) -> CliResult<(Vec<(String, PathBuf, PathBuf)>, Vec<String>)> {
    let preds = io::label_files(pred)?;
    let gts = io::label_files(gt)?;
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (stem, p) in &preds {
        match gts.get(stem) {
            Some(g) => pairs.push((stem.clone(), p.clone(), g.clone())),
            None => skipped.push(stem.clone()),
        }
    }
    skipped.extend(gts.keys().filter(|s| !preds.contains_key(*s)).cloned());
    skipped.sort();
    for s in &skipped {
        log::warn!("skipping `{s}`: no counterpart in the other directory");
    }
    Ok((pairs, skipped))
}

fn eval_items(items: &[(String, GroundTruth, LabelMap)]) -> CliResult<Vec<ImageEval>> {
    let run = |(stem, gt, out): &(String, GroundTruth, LabelMap)| -> CliResult<ImageEval> {
        let r = match_shadow_first(gt, out).map_err(|e| CliError::Input(format!("{stem}: {e}")))?;
        Ok(ImageEval::new(stem.clone(), &r))
    };
    with_thread_cap(|| {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            items.par_iter().map(run).collect::<CliResult<Vec<_>>>()
        }
        #[cfg(not(feature = "parallel"))]
        items.iter().map(run).collect::<CliResult<Vec<_>>>()
    })?
}

fn summarise(images: Vec<ImageEval>, skipped: Vec<String>) -> CliResult<EvalReport> {
    let results: Vec<MatchResult> = images
        .iter()
        .map(|i| MatchResult {
            pairs: i.pairs.clone(),
            shadow_pairs: i.shadow_pairs.clone(),
            unmatched: i.unmatched.clone(),
            gt_segments: i.gt_segments,
        })
        .collect();
    let dataset = dataset_score(&results).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(EvalReport {
        metric: METRIC_NOTE.to_string(),
        dataset,
        images,
        skipped,
    })
}

pub fn eval(pred: &Path, gt: &Path, output: Option<&Path>) -> CliResult<EvalReport> {
    let (pairs, skipped) = pair_stems(pred, gt)?;
    if pairs.is_empty() {
        return Err(CliError::Input(format!(
            "no prediction in {} has a ground truth in {}",
            pred.display(),
            gt.display()
        )));
    }
    let mut items = Vec::with_capacity(pairs.len());
    for (stem, p, g) in pairs {
        let truth = io::read_ground_truth(gt, &stem, &g)?;
        let out = io::read_labels(&p)?;
        items.push((stem, truth, out));
    }
    let report = summarise(eval_items(&items)?, skipped)?;
    if let Some(path) = output {
        io::write_json(path, &report)?;
    }
    log::info!(
        "dataset mIoU {:.4} over {} images ({} segments)",
        report.dataset.normalised,
        report.dataset.images,
        report.dataset.gt_segments
    );
    Ok(report)
}

pub struct SynthOutputs<'a> {
    pub image: &'a Path,
    pub labels: &'a Path,
    pub stripe_mask: Option<&'a Path>,
}

pub fn synth(spec: &SceneSpec, out: &SynthOutputs) -> CliResult<synth::Scene> {
    let scene = synth::generate(spec)?;
    io::write_rgb(out.image, &scene.image)?;
    io::write_labels(out.labels, &scene.labels)?;
    if let (Some(path), Some(mask)) = (out.stripe_mask, &scene.stripe) {
        io::write_mask(path, mask)?;
    }
    Ok(scene)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub sigma0: f64,
    pub sigma_g: f64,
    pub delta_l: f64,
    pub normalised: f64,
    pub literal_sum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub metric: String,
    pub base: PipelineConfig,
    pub images: usize,
    pub points: Vec<SweepPoint>,
    pub best: Option<SweepPoint>,
}

pub struct SweepGrid {
    pub sigma0: Vec<f64>,
    pub sigma_g: Vec<f64>,
    pub delta_l: Vec<f64>,
}

/// Grid search over `σ₀ × σ_G × δ_L` on a directory of images with ground
/// truth, images in parallel.
pub fn sweep(images: &Path, gt: &Path, base: &PipelineConfig, grid: &SweepGrid, output: Option<&Path>) -> CliResult<SweepReport> {
    let stems = io::label_files(gt)?;
    let mut data: Vec<(String, RgbImage, GroundTruth)> = Vec::new();
    for (stem, g) in &stems {
        let path = images.join(format!("{stem}.png"));
        if !path.is_file() {
            log::warn!("skipping `{stem}`: no image {}", path.display());
            continue;
        }
        data.push((stem.clone(), io::read_rgb(&path)?, io::read_ground_truth(gt, stem, g)?));
    }
    if data.is_empty() {
        return Err(CliError::Input(format!("no image in {} has a ground truth", images.display())));
    }
    let mut points = Vec::new();
    for &sigma0 in &grid.sigma0 {
        for &sigma_g in &grid.sigma_g {
            for &delta_l in &grid.delta_l {
                let cfg = PipelineConfig {
                    sigma0,
                    sigma_g,
                    delta_l,
                    ..base.clone()
                };
                cfg.validate()?;
                let items = segment_all(&data, &cfg)?;
                let report = summarise(eval_items(&items)?, Vec::new())?;
                log::info!("sigma0 {sigma0} sigma_g {sigma_g} delta_l {delta_l}: {:.4}", report.dataset.normalised);
                points.push(SweepPoint {
                    sigma0,
                    sigma_g,
                    delta_l,
                    normalised: report.dataset.normalised,
                    literal_sum: report.dataset.literal_sum,
                });
            }
        }
    }
    let best = points.iter().max_by(|a, b| a.normalised.total_cmp(&b.normalised)).cloned();
    let report = SweepReport {
        metric: METRIC_NOTE.to_string(),
        base: base.clone(),
        images: data.len(),
        points,
        best,
    };
    if let Some(path) = output {
        io::write_json(path, &report)?;
    }
    Ok(report)
}

fn segment_all(
    data: &[(String, RgbImage, GroundTruth)],
    cfg: &PipelineConfig,
) -> CliResult<Vec<(String, GroundTruth, LabelMap)>> {
    let run = |(stem, img, gt): &(String, RgbImage, GroundTruth)| -> CliResult<(String, GroundTruth, LabelMap)> {
        let seg = segment_image(img, cfg)?;
        Ok((stem.clone(), gt.clone(), seg.labels))
    };
    with_thread_cap(|| {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_iter().map(run).collect::<CliResult<Vec<_>>>()
        }
        #[cfg(not(feature = "parallel"))]
        data.iter().map(run).collect::<CliResult<Vec<_>>>()
    })?
}

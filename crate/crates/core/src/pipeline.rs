//! End-to-end segmentation.
//!
//! Steps, in order:
//!
//! 1. bilateral filter, then the colour homography;
//! 2. one graph vertex per pixel, `U = 0`;
//! 3. rank-0 merging with threshold `σ₀`;
//! 4. divergence isolation of rank-0 segments with `σ_G`;
//! 5. `U` reset to the rank-1 deviation;
//! 6. rank-1 merging with `σ₁ = √(2/3)·σ₀`, edges touching an isolated
//!    segment locked;
//! 7. rank-1 merging with `σ₁`, edges between two isolated segments
//!    locked;
//! 8. isolation cleared, edges failing the L/T test with `δ_L` locked;
//! 9. `U` reset to the rank-2 deviation;
//! 10. rank-2 merging with `σ₂ = √(1/3)·σ₀`, locked edges skipped;
//! 11. off-scale absorption with `μ_B`.
//!
//! `σ₀` and `δ_L` are given in 0-255 colour units and rescaled to the
//! normalised transformed space, where `√(U/N)` is measured. `μ_B` applies
//! to the mean brightness of the original (pre-homography) colours, also
//! on a 0-255 scale.

use crate::colour::{ColourVec, Rank};
use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap, RgbImage};
use crate::heuristics;
use crate::par::Execution;
use crate::preprocess::{bilateral_filter_with, BilateralParams, ColourHomography, HomographyParams, DEFAULT_RADIUS_CAP};
use crate::rag::{EdgeLock, Rag};
use serde::{Deserialize, Serialize};
use std::fmt;

const SCALE: f64 = 255.0;

/// All tunable thresholds and transform parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// rank-0 merge threshold on `√(U/N)`, 0-255 units
    pub sigma0: f64,
    /// divergence isolation threshold (dimensionless)
    pub sigma_g: f64,
    /// L/T endpoint distance threshold, 0-255 units
    pub delta_l: f64,
    /// off-scale mean brightness threshold, 0-255 units, original space
    pub mu_b: f64,
    /// homography saturation transfer
    pub a: f64,
    /// homography image of white
    pub b: f64,
    /// bilateral range sigma, 0-255 units
    pub f_r: f64,
    /// bilateral spatial sigma, pixels
    pub g_s: f64,
    /// bilateral window radius; `None` uses `⌈2·g_s⌉` capped at `radius_cap`
    pub radius: Option<usize>,
    pub radius_cap: usize,
}

/// Names accepted by [`PipelineConfig::preset`].
pub const PRESET_NAMES: [&str; 3] = ["selected-sfu", "iitp-close", "iitp-diffuse"];

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::with_thresholds(230.0, 10.0, 1.0, 22.5)
    }
}

impl PipelineConfig {
    fn with_thresholds(mu_b: f64, sigma0: f64, sigma_g: f64, delta_l: f64) -> Self {
        Self {
            sigma0,
            sigma_g,
            delta_l,
            mu_b,
            a: 0.0,
            b: 0.4,
            f_r: 50.0,
            g_s: 50.0,
            radius: None,
            radius_cap: DEFAULT_RADIUS_CAP,
        }
    }

    /// Reference configurations tuned for the three public sub-datasets.
    pub fn presets() -> Vec<(&'static str, PipelineConfig)> {
        vec![
            ("selected-sfu", Self::with_thresholds(230.0, 10.0, 1.0, 22.5)),
            ("iitp-close", Self::with_thresholds(160.0, 8.5, 1.0, 25.0)),
            ("iitp-diffuse", Self::with_thresholds(250.0, 6.0, 1.0, 30.0)),
        ]
    }

    pub fn preset(name: &str) -> Option<PipelineConfig> {
        Self::presets().into_iter().find(|(n, _)| *n == name).map(|(_, c)| c)
    }

    pub fn sigma1(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() * self.sigma0
    }

    pub fn sigma2(&self) -> f64 {
        (1.0f64 / 3.0).sqrt() * self.sigma0
    }

    pub fn homography(&self) -> HomographyParams {
        HomographyParams { a: self.a, b: self.b }
    }

    pub fn bilateral(&self) -> BilateralParams {
        BilateralParams {
            range_sigma: self.f_r,
            spatial_sigma: self.g_s,
            radius: self
                .radius
                .unwrap_or_else(|| BilateralParams::default_radius(self.g_s, self.radius_cap)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must be positive")))
            }
        };
        positive("sigma0", self.sigma0)?;
        positive("sigma_g", self.sigma_g)?;
        positive("delta_l", self.delta_l)?;
        if !self.mu_b.is_finite() {
            return Err(Error::InvalidConfig(format!("mu_b = {} must be finite", self.mu_b)));
        }
        self.homography().validate()?;
        self.bilateral().validate()
    }
}

/// Pipeline step, numbered as in the module documentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Step {
    Preprocess = 1,
    BuildGraph = 2,
    MergeRank0 = 3,
    IsolateRank0 = 4,
    ResetRank1 = 5,
    MergeRank1Strict = 6,
    MergeRank1 = 7,
    LockNonLt = 8,
    ResetRank2 = 9,
    MergeRank2 = 10,
    OffScale = 11,
}

impl Step {
    pub const ALL: [Step; 11] = [
        Step::Preprocess,
        Step::BuildGraph,
        Step::MergeRank0,
        Step::IsolateRank0,
        Step::ResetRank1,
        Step::MergeRank1Strict,
        Step::MergeRank1,
        Step::LockNonLt,
        Step::ResetRank2,
        Step::MergeRank2,
        Step::OffScale,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Preprocess => "bilateral-and-homography",
            Step::BuildGraph => "build-graph",
            Step::MergeRank0 => "merge-rank0",
            Step::IsolateRank0 => "isolate-rank0",
            Step::ResetRank1 => "reset-ssd-rank1",
            Step::MergeRank1Strict => "merge-rank1-any-isolated-locked",
            Step::MergeRank1 => "merge-rank1-both-isolated-locked",
            Step::LockNonLt => "lock-non-lt-edges",
            Step::ResetRank2 => "reset-ssd-rank2",
            Step::MergeRank2 => "merge-rank2",
            Step::OffScale => "off-scale-merge",
        }
    }

    fn next(self) -> Option<Step> {
        Step::ALL.get(self as usize).copied()
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.number(), self.name())
    }
}

/// What one step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u8,
    pub name: String,
    /// rank of `U` after the step
    pub rank: u8,
    /// merge threshold in 0-255 units, for merge steps
    pub sigma: Option<f64>,
    pub merges: usize,
    /// isolated vertices or locked edges marked by the step
    pub marked: usize,
    pub segments: usize,
    /// `√(U/N)` after the step, 0-255 units
    pub rms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub width: usize,
    pub height: usize,
    pub steps: Vec<StepReport>,
    pub final_segments: usize,
}

/// Output of [`segment_image`].
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub labels: LabelMap,
    pub report: RunReport,
}

/// Filtered colours in the original space and after the homography, both
/// normalised to `[0, 1]`.
pub fn prepare(image: &RgbImage, config: &PipelineConfig, exec: Execution) -> Result<(Grid<ColourVec>, Grid<ColourVec>)> {
    if image.is_empty() {
        return Err(Error::EmptyImage);
    }
    config.validate()?;
    let raw = image.map(|&px| ColourVec::from_rgb8(px));
    let filtered = bilateral_filter_with(&raw, &config.bilateral(), exec);
    let original = filtered.map(|p| *p * (1.0 / SCALE));
    let h = ColourHomography::new(config.homography())?;
    let transformed: Vec<ColourVec> = original
        .as_slice()
        .iter()
        .map(|p| h.apply(*p))
        .collect::<Result<_>>()?;
    let transformed = Grid::from_vec(image.width(), image.height(), transformed)?;
    Ok((transformed, original))
}

/// Step-by-step driver over one image.
pub struct Segmenter {
    config: PipelineConfig,
    exec: Execution,
    rag: Rag,
    done: Step,
    report: RunReport,
}

impl Segmenter {
    /// Runs steps 1 and 2.
    pub fn new(image: &RgbImage, config: &PipelineConfig) -> Result<Self> {
        Self::with_execution(image, config, Execution::default())
    }

    pub fn with_execution(image: &RgbImage, config: &PipelineConfig, exec: Execution) -> Result<Self> {
        let (transformed, original) = prepare(image, config, exec)?;
        let rag = Rag::from_pixels(&transformed, &original)?;
        let mut s = Self {
            config: config.clone(),
            exec,
            rag,
            done: Step::BuildGraph,
            report: RunReport {
                width: image.width(),
                height: image.height(),
                ..Default::default()
            },
        };
        s.record(Step::Preprocess, None, 0, 0);
        s.record(Step::BuildGraph, None, 0, 0);
        Ok(s)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn rag(&self) -> &Rag {
        &self.rag
    }

    /// Last completed step.
    pub fn completed(&self) -> Step {
        self.done
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    fn record(&mut self, step: Step, sigma: Option<f64>, merges: usize, marked: usize) {
        self.report.steps.push(StepReport {
            step: step.number(),
            name: step.name().to_string(),
            rank: self.rag.rank().as_u8(),
            sigma,
            merges,
            marked,
            segments: self.rag.segment_count(),
            rms: self.rag.rms() * SCALE,
        });
        self.report.final_segments = self.rag.segment_count();
        self.done = step;
    }

    /// Runs the next step; `None` once the pipeline is complete.
    pub fn step(&mut self) -> Result<Option<Step>> {
        let Some(step) = self.done.next() else {
            return Ok(None);
        };
        let cfg = &self.config;
        let (s0, s1, s2) = (cfg.sigma0, cfg.sigma1(), cfg.sigma2());
        let (sigma_g, delta_l, mu_b) = (cfg.sigma_g, cfg.delta_l / SCALE, cfg.mu_b / SCALE);
        let exec = self.exec;
        let rag = &mut self.rag;
        let (sigma, merges, marked) = match step {
            Step::Preprocess | Step::BuildGraph => unreachable!("run by the constructor"),
            Step::MergeRank0 => {
                let out = rag.run_stage_with(Rank::Point, s0 / SCALE, EdgeLock::None, exec)?;
                (Some(s0), out.merges, 0)
            }
            Step::IsolateRank0 => {
                let marks = heuristics::mark_isolated_rank0_with(rag, sigma_g, exec)?;
                rag.set_marks(&marks);
                (None, 0, marks.isolated.len())
            }
            Step::ResetRank1 => {
                rag.reinitialise_ssd(Rank::Line)?;
                (None, 0, 0)
            }
            Step::MergeRank1Strict => {
                let out = rag.run_stage_with(Rank::Line, s1 / SCALE, EdgeLock::AnyIsolated, exec)?;
                (Some(s1), out.merges, 0)
            }
            Step::MergeRank1 => {
                let out = rag.run_stage_with(Rank::Line, s1 / SCALE, EdgeLock::BothIsolated, exec)?;
                (Some(s1), out.merges, 0)
            }
            Step::LockNonLt => {
                rag.clear_marks();
                let marks = heuristics::lock_non_lt_edges_with(rag, delta_l, exec)?;
                rag.set_marks(&marks);
                (None, 0, marks.locked_edges.len())
            }
            Step::ResetRank2 => {
                rag.reinitialise_ssd(Rank::Plane)?;
                (None, 0, 0)
            }
            Step::MergeRank2 => {
                let out = rag.run_stage_with(Rank::Plane, s2 / SCALE, EdgeLock::MarkedEdges, exec)?;
                (Some(s2), out.merges, 0)
            }
            Step::OffScale => {
                let merges = heuristics::off_scale_merge(rag, mu_b, delta_l)?;
                (None, merges, 0)
            }
        };
        self.record(step, sigma, merges, marked);
        Ok(Some(step))
    }

    /// Runs steps until `last` has completed.
    pub fn run_through(&mut self, last: Step) -> Result<()> {
        while self.done < last {
            if self.step()?.is_none() {
                break;
            }
        }
        Ok(())
    }

    pub fn label_map(&self) -> LabelMap {
        self.rag.label_map()
    }

    pub fn finish(mut self) -> Result<Segmentation> {
        self.run_through(Step::OffScale)?;
        Ok(Segmentation {
            labels: self.rag.label_map(),
            report: self.report,
        })
    }
}

/// Runs all eleven steps.
pub fn segment_image(image: &RgbImage, config: &PipelineConfig) -> Result<Segmentation> {
    Segmenter::new(image, config)?.finish()
}

pub fn segment_image_with(image: &RgbImage, config: &PipelineConfig, exec: Execution) -> Result<Segmentation> {
    Segmenter::with_execution(image, config, exec)?.finish()
}

//! Command-line front end for `colorseg`.
//!
//! Diagnostics go to stderr; machine-readable output goes only to the files
//! named on the command line. Exit status is 0 on success, 1 when the
//! segmentation itself fails and 2 for I/O or configuration problems.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use clap::{Args, Parser, Subcommand};
use colorseg::synth::{SceneKind, SceneSpec};
use config::Overrides;
use error::CliResult;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "colorseg", version, about = "Physics-based linear colour segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image into a 16-bit PNG label map.
    Segment(SegmentArgs),
    /// Score predicted label maps against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene with its ground truth.
    Synth(SynthArgs),
    /// Grid search over sigma0, sigma_g and delta_l on a dataset.
    Sweep(SweepArgs),
}

/// Thresholds are in 0-255 colour units. sigma0 is compared with the RMS
/// deviation measured after the colour homography; mu_b applies to mean
/// brightness before it.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Named parameter set: selected-sfu (default), iitp-close, iitp-diffuse.
    #[arg(long)]
    pub preset: Option<String>,
    /// key = value file with PipelineConfig field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rank-0 merge threshold.
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Divergence isolation threshold (dimensionless).
    #[arg(long = "sigma-g")]
    pub sigma_g: Option<f64>,
    /// L/T endpoint distance threshold.
    #[arg(long = "delta-l")]
    pub delta_l: Option<f64>,
    /// Off-scale mean brightness threshold, original colours.
    #[arg(long = "mu-b")]
    pub mu_b: Option<f64>,
    /// Homography saturation transfer `a`.
    #[arg(long = "homography-a", alias = "a")]
    pub homography_a: Option<f64>,
    /// Homography white point `b`; must exceed (2a+1)/3.
    #[arg(long = "homography-b", alias = "b")]
    pub homography_b: Option<f64>,
    /// Bilateral range sigma.
    #[arg(long)]
    pub fr: Option<f64>,
    /// Bilateral spatial sigma in pixels.
    #[arg(long)]
    pub gs: Option<f64>,
    /// Bilateral window radius; defaults to ceil(2*gs) capped at 16.
    #[arg(long)]
    pub radius: Option<usize>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            sigma0: self.sigma0,
            sigma_g: self.sigma_g,
            delta_l: self.delta_l,
            mu_b: self.mu_b,
            a: self.homography_a,
            b: self.homography_b,
            f_r: self.fr,
            g_s: self.gs,
            radius: self.radius,
            radius_cap: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input image (8-bit PNG or PPM).
    pub input: PathBuf,
    /// Output label map (.png); a .json sidecar is written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Run report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Accepted for symmetry with `synth`; segmentation is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted label maps `stem.png`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth `stem.png` and `stem.shadow.N.png`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Evaluation report (JSON).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// mondrian-rank0, shaded-rank1, dichromatic-rank2 or offscale-stripe.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    /// Gaussian noise sigma, 0-255 units.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output image (.png or .ppm).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output ground-truth label map (.png).
    #[arg(long)]
    pub labels: PathBuf,
    /// Clipped-stripe mask for offscale-stripe scenes (.png).
    #[arg(long)]
    pub stripe_mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Directory of input images `stem.png`.
    #[arg(long)]
    pub images: PathBuf,
    /// Ground-truth directory, as for `eval`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated sigma0 values; defaults to the base configuration.
    #[arg(long = "sigma0-values", value_delimiter = ',')]
    pub sigma0_values: Vec<f64>,
    #[arg(long = "sigma-g-values", value_delimiter = ',')]
    pub sigma_g_values: Vec<f64>,
    #[arg(long = "delta-l-values", value_delimiter = ',')]
    pub delta_l_values: Vec<f64>,
    /// Sweep report (JSON).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn or_base(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Segment(a) => {
            commands::segment(&commands::SegmentJob {
                input: &a.input,
                output: &a.output,
                report: a.report.as_deref(),
                preset: a.config.preset.as_deref(),
                config_file: a.config.config.as_deref(),
                overrides: &a.config.overrides(),
            })?;
        }
        Command::Eval(a) => {
            let r = commands::eval(&a.pred, &a.gt, a.output.as_deref())?;
            eprintln!(
                "dataset-mIoU {:.4} (literal sum {:.4}) over {} images",
                r.dataset.normalised, r.dataset.literal_sum, r.dataset.images
            );
        }
        Command::Synth(a) => {
            let kind: SceneKind = a.kind.parse()?;
            let spec = SceneSpec::new(kind, a.width, a.height, a.segments, a.noise, a.seed);
            commands::synth(
                &spec,
                &commands::SynthOutputs {
                    image: &a.output,
                    labels: &a.labels,
                    stripe_mask: a.stripe_mask.as_deref(),
                },
            )?;
        }
        Command::Sweep(a) => {
            let base = config::resolve(a.config.preset.as_deref(), a.config.config.as_deref(), &a.config.overrides())?;
            let grid = commands::SweepGrid {
                sigma0: or_base(&a.sigma0_values, base.sigma0),
                sigma_g: or_base(&a.sigma_g_values, base.sigma_g),
                delta_l: or_base(&a.delta_l_values, base.delta_l),
            };
            let r = commands::sweep(&a.images, &a.gt, &base, &grid, a.output.as_deref())?;
            if let Some(b) = r.best {
                eprintln!(
                    "best {:.4}: sigma0 {} sigma_g {} delta_l {}",
                    b.normalised, b.sigma0, b.sigma_g, b.delta_l
                );
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

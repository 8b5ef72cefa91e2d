//! Physics-based linear colour segmentation.
//!
//! An image is split into uniformly coloured regions by greedy merging on a
//! region adjacency graph. Merge costs are increments of the sum of squared
//! deviations of pixel colours from rank-0 (point), rank-1 (line) and rank-2
//! (plane) least-squares models, evaluated in O(1) from additive segment
//! statistics. Merging runs in a projectively transformed colour space that
//! stretches dark colours and compresses bright ones while keeping lines and
//! planes intact.
//!
//! ```no_run
//! use colorseg::{pipeline::{segment_image, PipelineConfig}, RgbImage};
//!
//! let image = RgbImage::filled(64, 48, [120, 80, 40]);
//! let config = PipelineConfig::preset("iitp-close").unwrap();
//! let result = segment_image(&image, &config).unwrap();
//! assert_eq!(result.labels.segment_count(), 1);
//! ```

pub mod colour;
pub mod eigen;
pub mod eval;
pub mod grid;
pub mod heuristics;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod rag;
pub mod synth;

mod error;

pub use colour::{ColourVec, Rank, RegionStats, ScatterSpectrum, Sym3};
pub use error::{Error, Result};
pub use grid::{Grid, LabelMap, RgbImage};
pub use par::Execution;

//! Edge-preserving smoothing and the projective colour-space transform.

use crate::colour::ColourVec;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::{self, Execution};
use serde::{Deserialize, Serialize};

/// Smallest admissible homogeneous coordinate after the transform.
pub const MIN_W: f64 = 1e-12;

/// Default cap on the bilateral window radius.
pub const DEFAULT_RADIUS_CAP: usize = 16;

/// Parameters of the brightness-symmetric colour homography.
///
/// `a` moves the fully saturated primaries towards grey, `b` is the image of
/// white on the grey axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomographyParams {
    pub a: f64,
    pub b: f64,
}

impl HomographyParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    pub const IDENTITY: Self = Self { a: 0.0, b: 1.0 };

    /// `0 ≤ a ≤ 1` and `(2a+1)/3 < b ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        let Self { a, b } = *self;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidConfig("homography parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidConfig(format!("homography a = {a} outside [0, 1]")));
        }
        let lower = (2.0 * a + 1.0) / 3.0;
        if b <= lower || b > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "homography b = {b} outside ({lower}, 1] for a = {a}"
            )));
        }
        Ok(())
    }
}

/// 4x4 projective transform of colour space acting on `(R, G, B, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColourHomography {
    pub h: [[f64; 4]; 4],
}

impl ColourHomography {
    /// Builds the transform that fixes black, sends white to `(b, b, b)` and
    /// each primary `e_i` to the point with `1` at `i` and `a` elsewhere.
    pub fn new(p: HomographyParams) -> Result<Self> {
        p.validate()?;
        let HomographyParams { a, b } = p;
        let ab = a * b;
        let k = a - b / 2.0 + 0.5;
        let w = -a + 1.5 * b - 0.5;
        Ok(Self {
            h: [
                [b, ab, ab, 0.0],
                [ab, b, ab, 0.0],
                [ab, ab, b, 0.0],
                [k, k, k, w],
            ],
        })
    }

    /// Homogeneous multiply followed by the perspective divide.
    pub fn apply(&self, p: ColourVec) -> Result<ColourVec> {
        let c = [p.r, p.g, p.b, 1.0];
        let row = |i: usize| self.h[i].iter().zip(&c).map(|(h, x)| h * x).sum::<f64>();
        let w = row(3);
        if !(w > MIN_W) {
            return Err(Error::DegenerateTransform(w));
        }
        Ok(ColourVec::new(row(0) / w, row(1) / w, row(2) / w))
    }
}

/// Gaussian range x Gaussian spatial bilateral filter parameters.
///
/// `range_sigma` is in 0-255 colour units, `spatial_sigma` and `radius` in
/// pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    pub range_sigma: f64,
    pub spatial_sigma: f64,
    pub radius: usize,
}

impl BilateralParams {
    pub fn new(range_sigma: f64, spatial_sigma: f64, radius: usize) -> Result<Self> {
        let p = Self {
            range_sigma,
            spatial_sigma,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    /// Radius `⌈2·spatial_sigma⌉`, capped at `cap`.
    pub fn default_radius(spatial_sigma: f64, cap: usize) -> usize {
        ((2.0 * spatial_sigma).ceil() as usize).clamp(1, cap.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_sigma > 0.0 && self.range_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("range sigma {} must be > 0", self.range_sigma)));
        }
        if !(self.spatial_sigma > 0.0 && self.spatial_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spatial sigma {} must be > 0",
                self.spatial_sigma
            )));
        }
        if self.radius == 0 {
            return Err(Error::InvalidConfig("bilateral radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bilateral filter with clamp-to-edge borders.
///
/// Each output pixel is the normalised weighted mean over the
/// `(2r+1)²` window; samples outside the image read the nearest edge pixel
/// but keep the spatial weight of their nominal offset.
pub fn bilateral_filter(image: &Grid<ColourVec>, params: &BilateralParams) -> Grid<ColourVec> {
    bilateral_filter_with(image, params, Execution::default())
}

pub fn bilateral_filter_with(
    image: &Grid<ColourVec>,
    params: &BilateralParams,
    exec: Execution,
) -> Grid<ColourVec> {
    let (w, h) = image.dims();
    if w == 0 || h == 0 {
        return image.clone();
    }
    let r = params.radius as isize;
    let side = 2 * params.radius + 1;
    let spatial_k = -1.0 / (2.0 * params.spatial_sigma * params.spatial_sigma);
    let range_k = -1.0 / (2.0 * params.range_sigma * params.range_sigma);
    let spatial: Vec<f64> = (0..side * side)
        .map(|i| {
            let dx = (i % side) as f64 - r as f64;
            let dy = (i / side) as f64 - r as f64;
            ((dx * dx + dy * dy) * spatial_k).exp()
        })
        .collect();
    let src = image.as_slice();
    let mut out = vec![ColourVec::ZERO; w * h];
    par::for_each_chunk_mut(exec, &mut out, w, |y, row| {
        for (x, dst) in row.iter_mut().enumerate() {
            let centre = src[y * w + x];
            let mut acc = ColourVec::ZERO;
            let mut norm = 0.0;
            for dy in -r..=r {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let srow = &src[sy * w..(sy + 1) * w];
                let krow = &spatial[(dy + r) as usize * side..];
                for dx in -r..=r {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let q = srow[sx];
                    let wgt = krow[(dx + r) as usize] * ((q - centre).norm_sq() * range_k).exp();
                    acc += q * wgt;
                    norm += wgt;
                }
            }
            *dst = acc * (1.0 / norm);
        }
    });
    Grid::from_vec(w, h, out).expect("output has image dimensions")
}

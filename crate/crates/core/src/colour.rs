//! Colour points, additive segment statistics and rank-r least-squares
//! deviations.

use crate::eigen;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A point in colour space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColourVec {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl ColourVec {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn from_rgb8(px: [u8; 3]) -> Self {
        Self::new(px[0] as f64, px[1] as f64, px[2] as f64)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.r * o.r + self.g * o.g + self.b * o.b
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.g * o.b - self.b * o.g,
            self.b * o.r - self.r * o.b,
            self.r * o.g - self.g * o.r,
        )
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction; the zero vector stays zero.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    /// Mean of the three components.
    pub fn brightness(&self) -> f64 {
        (self.r + self.g + self.b) / 3.0
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }
}

impl Add for ColourVec {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl AddAssign for ColourVec {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for ColourVec {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

impl Mul<f64> for ColourVec {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.r * k, self.g * k, self.b * k)
    }
}

impl Neg for ColourVec {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.r, -self.g, -self.b)
    }
}

/// Symmetric 3x3 matrix stored as its upper triangle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Sym3 {
    pub const ZERO: Self = Self {
        xx: 0.0,
        xy: 0.0,
        xz: 0.0,
        yy: 0.0,
        yz: 0.0,
        zz: 0.0,
    };

    pub const IDENTITY: Self = Self {
        xx: 1.0,
        yy: 1.0,
        zz: 1.0,
        ..Self::ZERO
    };

    /// `v vᵀ`
    pub fn outer(v: &ColourVec) -> Self {
        Self {
            xx: v.r * v.r,
            xy: v.r * v.g,
            xz: v.r * v.b,
            yy: v.g * v.g,
            yz: v.g * v.b,
            zz: v.b * v.b,
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz) - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn frobenius(&self) -> f64 {
        (self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz))
            .sqrt()
    }

    pub fn mul_vec(&self, v: &ColourVec) -> ColourVec {
        ColourVec::new(
            self.xx * v.r + self.xy * v.g + self.xz * v.b,
            self.xy * v.r + self.yy * v.g + self.yz * v.b,
            self.xz * v.r + self.yz * v.g + self.zz * v.b,
        )
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Self {
            xx: (self.yy * self.zz - self.yz * self.yz) * inv,
            xy: (self.xz * self.yz - self.xy * self.zz) * inv,
            xz: (self.xy * self.yz - self.xz * self.yy) * inv,
            yy: (self.xx * self.zz - self.xz * self.xz) * inv,
            yz: (self.xy * self.xz - self.xx * self.yz) * inv,
            zz: (self.xx * self.yy - self.xy * self.xy) * inv,
        })
    }

    pub fn to_array(&self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }
}

impl Add for Sym3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            xz: self.xz + o.xz,
            yy: self.yy + o.yy,
            yz: self.yz + o.yz,
            zz: self.zz + o.zz,
        }
    }
}

impl AddAssign for Sym3 {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Sym3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o * -1.0
    }
}

impl Mul<f64> for Sym3 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self {
            xx: self.xx * k,
            xy: self.xy * k,
            xz: self.xz * k,
            yy: self.yy * k,
            yz: self.yz * k,
            zz: self.zz * k,
        }
    }
}

/// Dimension of the affine model fitted to a segment's colour cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rank {
    Point = 0,
    Line = 1,
    Plane = 2,
}

impl Rank {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Rank {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Rank::Point),
            1 => Ok(Rank::Line),
            2 => Ok(Rank::Plane),
            _ => Err(Error::InvalidConfig(format!("rank must be 0, 1 or 2, got {v}"))),
        }
    }
}

/// Additive sufficient statistics of a segment.
///
/// `s` and `m` accumulate the (transformed) colours, `bsum` the brightness
/// of the same pixels in the original colour space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub n: u64,
    pub s: ColourVec,
    pub m: Sym3,
    pub bsum: f64,
}

/// Relative tolerance for negative scatter eigenvalues.
const CLAMP_REL: f64 = 1e-7;
/// Absolute floor, relative to the uncentred second moment, covering the
/// cancellation in `m - s sᵀ / n`.
const CLAMP_MOMENT: f64 = 1e-12;

impl RegionStats {
    pub const ZERO: Self = Self {
        n: 0,
        s: ColourVec::ZERO,
        m: Sym3::ZERO,
        bsum: 0.0,
    };

    pub fn from_pixel(p: ColourVec, original: ColourVec) -> Self {
        Self {
            n: 1,
            s: p,
            m: Sym3::outer(&p),
            bsum: original.brightness(),
        }
    }

    /// Accumulates statistics over `pixels`; `original` holds the same
    /// pixels before the colour-space transform.
    ///
    /// # Panics
    /// If the two slices differ in length.
    pub fn from_pixels(pixels: &[ColourVec], original: &[ColourVec]) -> Self {
        assert_eq!(pixels.len(), original.len(), "pixel and original slices differ in length");
        pixels
            .iter()
            .zip(original)
            .fold(Self::ZERO, |acc, (p, o)| acc + Self::from_pixel(*p, *o))
    }

    pub fn merge(&self, other: &Self) -> Self {
        *self + *other
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> Option<ColourVec> {
        (self.n > 0).then(|| self.s * (1.0 / self.n as f64))
    }

    /// Mean brightness in the original colour space.
    pub fn mean_brightness(&self) -> Option<f64> {
        (self.n > 0).then(|| self.bsum / self.n as f64)
    }

    /// Scatter matrix `Σ (p-μ)(p-μ)ᵀ = m - s sᵀ / n`.
    pub fn scatter(&self) -> Result<Sym3> {
        if self.n == 0 {
            return Err(Error::EmptySegment);
        }
        Ok(self.m - Sym3::outer(&self.s) * (1.0 / self.n as f64))
    }

    fn clamp_tolerance(&self, scatter_trace: f64) -> f64 {
        CLAMP_REL * scatter_trace.abs() + CLAMP_MOMENT * self.m.trace().abs()
    }

    fn clamp(&self, value: f64, tolerance: f64) -> Result<f64> {
        if value >= 0.0 {
            Ok(value)
        } else if -value <= tolerance {
            Ok(0.0)
        } else {
            Err(Error::NumericalCorruption { value, tolerance })
        }
    }

    /// Mean and eigendecomposition of the scatter matrix.
    pub fn spectrum(&self) -> Result<ScatterSpectrum> {
        let scatter = self.scatter()?;
        let mean = self.mean().ok_or(Error::EmptySegment)?;
        let (raw, vectors) = eigen::decompose(&scatter);
        let tol = self.clamp_tolerance(scatter.trace());
        let mut values = [0.0; 3];
        for (v, r) in values.iter_mut().zip(raw) {
            *v = self.clamp(r, tol)?;
        }
        Ok(ScatterSpectrum { values, vectors, mean })
    }

    /// Minimal sum of squared Euclidean distances from the segment's pixels
    /// to a rank-`rank` affine model (point, line or plane).
    pub fn rank_ssd(&self, rank: Rank) -> Result<f64> {
        let scatter = self.scatter()?;
        let trace = scatter.trace();
        let tol = self.clamp_tolerance(trace);
        match rank {
            Rank::Point => self.clamp(trace, tol),
            Rank::Line | Rank::Plane => {
                let raw = eigen::eigenvalues(&scatter);
                let mut l = [0.0; 3];
                for (v, r) in l.iter_mut().zip(raw) {
                    *v = self.clamp(r, tol)?;
                }
                Ok(if rank == Rank::Line { l[1] + l[2] } else { l[2] })
            }
        }
    }
}

impl Add for RegionStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            s: self.s + o.s,
            m: self.m + o.m,
            bsum: self.bsum + o.bsum,
        }
    }
}

impl AddAssign for RegionStats {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Dispersion ellipsoid of a segment: centre and principal axes of the
/// scatter matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterSpectrum {
    /// λ₁ ≥ λ₂ ≥ λ₃ ≥ 0
    pub values: [f64; 3],
    pub vectors: [ColourVec; 3],
    pub mean: ColourVec,
}

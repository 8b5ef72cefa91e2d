//! Seeded synthetic scenes with known ground truth.
//!
//! Ground-truth labels start at 1; every generated pixel is annotated.

use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const MIN_SIZE: usize = 16;

/// Minimum pairwise distance between mondrian patch colours, 8-bit units.
pub const MONDRIAN_SEPARATION: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// flat matte patches
    MondrianRank0,
    /// matte patches under a shading ramp
    ShadedRank1,
    /// glossy cylinder with an unsaturated highlight
    DichromaticRank2,
    /// glossy cylinder whose highlight is clipped to white
    OffscaleStripe,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [
        SceneKind::MondrianRank0,
        SceneKind::ShadedRank1,
        SceneKind::DichromaticRank2,
        SceneKind::OffscaleStripe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::MondrianRank0 => "mondrian-rank0",
            SceneKind::ShadedRank1 => "shaded-rank1",
            SceneKind::DichromaticRank2 => "dichromatic-rank2",
            SceneKind::OffscaleStripe => "offscale-stripe",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scene kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    /// patch count for mondrian and shaded scenes; cylinder scenes always
    /// have three
    pub segments: usize,
    /// additive Gaussian noise, 8-bit units
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize, segments: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind,
            width,
            height,
            segments,
            noise_sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIZE || self.height < MIN_SIZE {
            return Err(Error::InvalidConfig(format!(
                "scene size {}x{} is below {MIN_SIZE}x{MIN_SIZE}",
                self.width, self.height
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        let voronoi = matches!(self.kind, SceneKind::MondrianRank0 | SceneKind::ShadedRank1);
        if voronoi && (self.segments == 0 || self.segments > 64) {
            return Err(Error::InvalidConfig(format!("segment count {} must be in 1..=64", self.segments)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub labels: LabelMap,
    /// clipped highlight pixels, for off-scale scenes
    pub stripe: Option<Grid<bool>>,
}

pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (colours, labels, stripe) = match spec.kind {
        SceneKind::MondrianRank0 => mondrian(spec, &mut rng),
        SceneKind::ShadedRank1 => shaded(spec, &mut rng),
        SceneKind::DichromaticRank2 => cylinder(spec, &mut rng, false),
        SceneKind::OffscaleStripe => cylinder(spec, &mut rng, true),
    };
    let image = quantise(&colours, spec.noise_sigma, stripe.as_ref(), &mut rng);
    Ok(Scene { image, labels, stripe })
}

/// Two adjacent shaded patches whose colour clusters are parallel segments
/// `separation` apart (8-bit units), brightness ramping top to bottom.
pub fn parallel_ramps(width: usize, height: usize, separation: f64, seed: u64) -> Result<Scene> {
    if width < MIN_SIZE || height < MIN_SIZE {
        return Err(Error::InvalidConfig(format!("scene size {width}x{height} is below {MIN_SIZE}x{MIN_SIZE}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = loop {
        let d = [rng.random_range(0.3..1.0), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0)];
        if norm(d) > 0.0 {
            break scale(d, 1.0 / norm(d));
        }
    };
    // a unit vector orthogonal to the ramp direction
    let helper = if dir[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let perp = cross(dir, helper);
    let perp = scale(perp, 1.0 / norm(perp));
    let base = [rng.random_range(70.0..90.0), rng.random_range(70.0..90.0), rng.random_range(70.0..90.0)];
    let base_b = add(base, scale(perp, separation));
    let length = rng.random_range(90.0..110.0);
    let split = width / 2;
    let labels = LabelMap::from_fn(width, height, |x, _| if x < split { 1 } else { 2 });
    let colours = Grid::from_fn(width, height, |x, y| {
        let t = y as f64 / (height - 1) as f64;
        let origin = if x < split { base } else { base_b };
        add(origin, scale(dir, length * t))
    });
    let image = quantise(&colours, 0.0, None, &mut rng);
    Ok(Scene {
        image,
        labels,
        stripe: None,
    })
}

type Rgb = [f64; 3];

fn add(a: Rgb, b: Rgb) -> Rgb {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Rgb, s: f64) -> Rgb {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: Rgb) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: Rgb, b: Rgb) -> Rgb {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn quantise(colours: &Grid<Rgb>, noise: f64, stripe: Option<&Grid<bool>>, rng: &mut ChaCha8Rng) -> RgbImage {
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("validated sigma"));
    let mut out = Vec::with_capacity(colours.len());
    for (i, c) in colours.as_slice().iter().enumerate() {
        if stripe.is_some_and(|s| s.as_slice()[i]) {
            out.push([255, 255, 255]);
            continue;
        }
        let mut px = [0u8; 3];
        for (k, v) in c.iter().enumerate() {
            let n = normal.map_or(0.0, |d| d.sample(rng));
            px[k] = (v + n).round().clamp(0.0, 255.0) as u8;
        }
        out.push(px);
    }
    Grid::from_vec(colours.width(), colours.height(), out).expect("same dimensions")
}

/// Nearest-site partition; sites are kept apart so no cell degenerates.
fn voronoi(width: usize, height: usize, k: usize, rng: &mut ChaCha8Rng) -> LabelMap {
    let mut min_dist = 0.6 * ((width * height) as f64 / k as f64).sqrt();
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(k);
    let mut attempts = 0;
    while sites.len() < k {
        let p = (rng.random_range(0..width) as f64, rng.random_range(0..height) as f64);
        if sites.iter().all(|s| (s.0 - p.0).hypot(s.1 - p.1) >= min_dist) {
            sites.push(p);
        }
        attempts += 1;
        if attempts % 1000 == 0 {
            min_dist *= 0.8;
        }
    }
    LabelMap::from_fn(width, height, |x, y| {
        let mut best = (f64::INFINITY, 0);
        for (i, s) in sites.iter().enumerate() {
            let d = (s.0 - x as f64).powi(2) + (s.1 - y as f64).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 as u32 + 1
    })
}

fn mondrian(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> (Grid<Rgb>, LabelMap, Option<Grid<bool>>) {
    let labels = voronoi(spec.width, spec.height, spec.segments, rng);
    let mut palette: Vec<Rgb> = Vec::with_capacity(spec.segments);
    let mut attempts = 0usize;
    while palette.len() < spec.segments {
        let c = [rng.random_range(40.0..215.0), rng.random_range(40.0..215.0), rng.random_range(40.0..215.0)];
        attempts += 1;
        let far = palette.iter().all(|p| norm(add(*p, scale(c, -1.0))) >= MONDRIAN_SEPARATION);
        // very large palettes cannot all be kept apart
        if far || attempts > 100_000 {
            palette.push(c);
        }
    }
    let colours = labels.map(|&l| palette[l as usize - 1]);
    (colours, labels, None)
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn shaded(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> (Grid<Rgb>, LabelMap, Option<Grid<bool>>) {
    let k = spec.segments;
    let labels = voronoi(spec.width, spec.height, k, rng);
    let hue0 = rng.random_range(0.0..360.0);
    let palette: Vec<Rgb> = (0..k)
        .map(|i| {
            let h = hue0 + 360.0 * i as f64 / k as f64 + rng.random_range(-10.0..10.0);
            scale(hsv(h, rng.random_range(0.6..0.9), 1.0), 250.0)
        })
        .collect();
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ux, uy) = (angle.cos(), angle.sin());
    let proj = |x: usize, y: usize| x as f64 * ux + y as f64 * uy;
    let corners = [
        proj(0, 0),
        proj(spec.width - 1, 0),
        proj(0, spec.height - 1),
        proj(spec.width - 1, spec.height - 1),
    ];
    let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let colours = Grid::from_fn(spec.width, spec.height, |x, y| {
        let t = 0.2 + 0.8 * (proj(x, y) - lo) / (hi - lo);
        scale(palette[*labels.get(x, y) as usize - 1], t)
    });
    (colours, labels, None)
}

/// Vertical glossy cylinder spanning the full image height between two
/// matte background strips (labels 1 and 3); the cylinder is label 2.
fn cylinder(spec: &SceneSpec, rng: &mut ChaCha8Rng, clipped: bool) -> (Grid<Rgb>, LabelMap, Option<Grid<bool>>) {
    let (w, h) = (spec.width, spec.height);
    let radius = (w as f64 * rng.random_range(0.25..0.3)).max(4.0);
    let centre = w as f64 / 2.0 + rng.random_range(-0.05..0.05) * w as f64;
    let body = scale(hsv(rng.random_range(0.0..360.0), rng.random_range(0.6..0.85), 1.0), 150.0);
    let left_bg = scale(hsv(rng.random_range(0.0..360.0), rng.random_range(0.2..0.5), 1.0), 90.0);
    let right_bg = scale(hsv(rng.random_range(0.0..360.0), rng.random_range(0.2..0.5), 1.0), 110.0);
    let phi: f64 = rng.random_range(-0.3..0.3);
    let light = [phi.sin(), 0.0, phi.cos()];
    let half = {
        let v = [light[0], 0.0, light[2] + 1.0];
        scale(v, 1.0 / norm(v))
    };
    let gloss = if clipped { 1.6 } else { 0.35 };
    let shininess = 30.0;

    let u_of = |x: usize| (x as f64 + 0.5 - centre) / radius;
    let labels = LabelMap::from_fn(w, h, |x, _| {
        let u = u_of(x);
        if u < -1.0 {
            1
        } else if u > 1.0 {
            3
        } else {
            2
        }
    });
    let column: Vec<Rgb> = (0..w)
        .map(|x| {
            let u = u_of(x);
            if u < -1.0 {
                return left_bg;
            }
            if u > 1.0 {
                return right_bg;
            }
            let n = [u, 0.0, (1.0 - u * u).max(0.0).sqrt()];
            let diffuse = n[0] * light[0] + n[2] * light[2];
            let shade = 0.25 + 0.75 * diffuse.max(0.0);
            let spec = (n[0] * half[0] + n[2] * half[2]).max(0.0).powf(shininess);
            add(scale(body, shade), scale([255.0; 3], gloss * spec))
        })
        .collect();
    let colours = Grid::from_fn(w, h, |x, _| column[x]);
    let stripe = clipped.then(|| Grid::from_fn(w, h, |x, _| column[x].iter().any(|&c| c > 255.0)));
    (colours, labels, stripe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colour::{ColourVec, RegionStats};

    fn spec(kind: SceneKind, segments: usize, noise: f64, seed: u64) -> SceneSpec {
        SceneSpec::new(kind, 64, 48, segments, noise, seed)
    }

    fn segment_stats(scene: &Scene, label: u32) -> RegionStats {
        let px: Vec<ColourVec> = scene
            .image
            .as_slice()
            .iter()
            .zip(scene.labels.as_slice())
            .filter(|(_, &l)| l == label)
            .map(|(p, _)| ColourVec::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect();
        RegionStats::from_pixels(&px, &px)
    }

    #[test]
    fn mondrian_has_requested_labels() {
        let s = generate(&spec(SceneKind::MondrianRank0, 4, 0.0, 7)).unwrap();
        assert_eq!(s.labels.segment_count(), 4);
        let mut ids: Vec<u32> = s.labels.as_slice().to_vec();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![1, 2, 3, 4]);
        assert!(s.labels.segments_are_connected());
    }

    #[test]
    fn mondrian_colours_are_separated() {
        let s = generate(&spec(SceneKind::MondrianRank0, 6, 0.0, 3)).unwrap();
        let means: Vec<ColourVec> = (1..=6).map(|l| segment_stats(&s, l).mean().unwrap()).collect();
        for i in 0..6 {
            for j in i + 1..6 {
                assert!((means[i] - means[j]).norm() >= MONDRIAN_SEPARATION - 1.0);
            }
        }
    }

    #[test]
    fn shaded_segments_are_rank_one() {
        let s = generate(&spec(SceneKind::ShadedRank1, 3, 0.0, 11)).unwrap();
        for l in 1..=3 {
            let v = segment_stats(&s, l).spectrum().unwrap().values;
            assert!(v[1] / v[0] < 0.01, "label {l}: {v:?}");
        }
    }

    #[test]
    fn offscale_stripe_is_white() {
        let s = generate(&spec(SceneKind::OffscaleStripe, 3, 2.0, 5)).unwrap();
        let stripe = s.stripe.as_ref().unwrap();
        let count = stripe.as_slice().iter().filter(|&&b| b).count();
        assert!(count >= 48);
        for (p, &b) in s.image.as_slice().iter().zip(stripe.as_slice()) {
            if b {
                assert_eq!(*p, [255, 255, 255]);
            }
        }
        // the stripe runs through the whole cylinder height
        for y in 0..48 {
            assert!((0..64).any(|x| *stripe.get(x, y)));
        }
    }

    #[test]
    fn dichromatic_highlight_is_not_clipped() {
        let s = generate(&spec(SceneKind::DichromaticRank2, 3, 0.0, 5)).unwrap();
        assert!(s.stripe.is_none());
        assert!(s.image.as_slice().iter().all(|p| p.iter().all(|&c| c < 255)));
        assert_eq!(s.labels.segment_count(), 3);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        for kind in SceneKind::ALL {
            let a = generate(&spec(kind, 5, 3.0, 42)).unwrap();
            let b = generate(&spec(kind, 5, 3.0, 42)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SceneSpec::new(SceneKind::MondrianRank0, 8, 32, 2, 0.0, 1)).is_err());
        assert!(generate(&spec(SceneKind::MondrianRank0, 0, 0.0, 1)).is_err());
        assert!(generate(&spec(SceneKind::MondrianRank0, 2, -1.0, 1)).is_err());
        assert!("nope".parse::<SceneKind>().is_err());
        assert_eq!("shaded-rank1".parse::<SceneKind>().unwrap(), SceneKind::ShadedRank1);
    }

    #[test]
    fn parallel_ramps_are_parallel() {
        let s = parallel_ramps(32, 32, 80.0, 9).unwrap();
        let a = segment_stats(&s, 1).spectrum().unwrap();
        let b = segment_stats(&s, 2).spectrum().unwrap();
        assert!(a.vectors[0].dot(&b.vectors[0]).abs() > 0.999);
        let gap = b.mean - a.mean;
        assert!((gap.norm() - 80.0).abs() < 2.0);
    }
}

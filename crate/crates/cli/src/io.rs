//! Raster and JSON file handling.
//!
//! Label maps are single-channel 16-bit PNGs. Ground-truth directories hold
//! `stem.png` label maps (0 = unannotated) next to optional
//! `stem.shadow.N.png` binary masks.

use crate::error::{CliError, CliResult};
use colorseg::eval::GroundTruth;
use colorseg::{Grid, LabelMap, RgbImage};
use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub fn read_rgb(path: &Path) -> CliResult<RgbImage> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| p.0).collect();
    Ok(Grid::from_vec(w, h, data)?)
}

fn format_for(path: &Path) -> CliResult<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm" | "pnm") => Ok(ImageFormat::Pnm),
        _ => Err(CliError::io(path, "unsupported extension, use .png or .ppm")),
    }
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> CliResult<()> {
    let raw: Vec<u8> = img.as_slice().iter().flatten().copied().collect();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer sized from image");
    buf.save_with_format(path, format_for(path)?)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> CliResult<()> {
    let raw = labels
        .as_slice()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| CliError::Input(format!("label {l} does not fit in 16 bits"))))
        .collect::<CliResult<Vec<u16>>>()?;
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(labels.width() as u32, labels.height() as u32, raw).expect("buffer sized from labels");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::io(path, e))
}

/// Reads a single-channel label map of 8 or 16 bits.
pub fn read_labels(path: &Path) -> CliResult<LabelMap> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?;
    let data: Vec<u32> = match &img {
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as u32).collect(),
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as u32).collect(),
        _ => return Err(CliError::io(path, "label maps must be single-channel grayscale")),
    };
    Ok(Grid::from_vec(img.width() as usize, img.height() as usize, data)?)
}

/// Nonzero pixels of a grayscale mask.
pub fn read_mask(path: &Path) -> CliResult<Grid<bool>> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_vec(w, h, img.pixels().map(|p| p.0[0] != 0).collect())?)
}

pub fn write_mask(path: &Path, mask: &Grid<bool>) -> CliResult<()> {
    let raw: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer sized from mask");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// `labels.png` -> `labels.json`.
pub fn sidecar_path(labels: &Path) -> PathBuf {
    labels.with_extension("json")
}

fn stem_of(path: &Path) -> Option<String> {
    path.file_name()?.to_str()?.strip_suffix(".png").map(str::to_string)
}

fn png_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && stem_of(&path).is_some() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Label maps of a directory by stem, skipping shadow masks.
pub fn label_files(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    Ok(png_files(dir)?
        .into_iter()
        .filter_map(|p| {
            let stem = stem_of(&p)?;
            (!stem.contains(".shadow.")).then_some((stem, p))
        })
        .collect())
}

/// Shadow mask paths for `stem`, ordered by their index `N`.
pub fn shadow_files(dir: &Path, stem: &str) -> CliResult<Vec<PathBuf>> {
    let prefix = format!("{stem}.shadow.");
    let mut found: Vec<(u64, PathBuf)> = png_files(dir)?
        .into_iter()
        .filter_map(|p| {
            let s = stem_of(&p)?;
            let idx = s.strip_prefix(&prefix)?.parse().ok()?;
            Some((idx, p))
        })
        .collect();
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn read_ground_truth(dir: &Path, stem: &str, labels: &Path) -> CliResult<GroundTruth> {
    let labels = read_labels(labels)?;
    let masks = shadow_files(dir, stem)?
        .iter()
        .map(|p| read_mask(p))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(GroundTruth::new(labels, masks)?)
}

//! PNG helpers for single-channel label layers and RGB images.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::grid::Grid;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Image { path: path.to_path_buf(), source: other },
    }
}

/// Reads any image as 8-bit grayscale.
pub fn read_gray(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    Grid::new(h as usize, w as usize, img.into_raw())
}

pub fn write_gray(path: &Path, grid: &Grid<u8>) -> Result<()> {
    let (h, w) = grid.dims();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([grid.get(y as usize, x as usize)]));
    img.save(path).map_err(|e| image_err(path, e))
}

/// Reads a grayscale map scaled to `[0, 1]`.
pub fn read_unit_map(path: &Path) -> Result<Grid<f64>> {
    Ok(read_gray(path)?.map(|v| f64::from(v) / 255.0))
}

/// Writes a `[0, 1]` map as 8-bit grayscale (values are clamped and rounded).
pub fn write_unit_map(path: &Path, grid: &Grid<f64>) -> Result<()> {
    write_gray(path, &grid.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

/// RGB image as three planes scaled to `[0, 1]`, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbPlanes {
    pub h: usize,
    pub w: usize,
    /// `[3 * h * w]`, channel-major.
    pub data: Vec<f64>,
}

impl RgbPlanes {
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.h + r) * self.w + col]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        for c in 0..3 {
            for r in 0..self.h {
                for col in 0..self.w {
                    data[(c * self.h + r) * self.w + col] = self.get(c, r, self.w - 1 - col);
                }
            }
        }
        Self { h: self.h, w: self.w, data }
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbPlanes> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = f64::from(px[c]) / 255.0;
        }
    }
    Ok(RgbPlanes { h, w, data })
}

pub fn write_rgb(path: &Path, img: &RgbPlanes) -> Result<()> {
    let out = RgbImage::from_fn(img.w as u32, img.h as u32, |x, y| {
        let px = |c| (img.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    });
    out.save(path).map_err(|e| image_err(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Sorted list of files in `dir` with the given extension.
pub(crate) fn list_files(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

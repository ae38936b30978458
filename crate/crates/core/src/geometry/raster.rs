use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, Scene};
use crate::error::{Error, Result};

/// `height x width` grid over the square `[-side/2, side/2]^2`, row 0 at the
/// top (largest y), column 0 at the left (smallest x). Row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRaster<T> {
    pub height: usize,
    pub width: usize,
    /// Physical side of the covered square, meters.
    pub side: f64,
    pub values: Vec<T>,
}

impl<T: Copy + Default> ImageRaster<T> {
    pub fn new(height: usize, width: usize, side: f64) -> Self {
        ImageRaster { height, width, side, values: vec![T::default(); height * width] }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.values[row * self.width + col] = value;
    }
}

impl<T> ImageRaster<T> {
    /// Pixel containing `p`. Pixels are half-open (left and top edges belong
    /// to the pixel), except that the last row and column are closed.
    pub fn pixel_of(&self, p: Point) -> Option<(usize, usize)> {
        let half = 0.5 * self.side;
        let col = locate((p.x + half) / self.side * self.width as f64, self.width)?;
        let row = locate((half - p.y) / self.side * self.height as f64, self.height)?;
        Some((row, col))
    }
}

fn locate(u: f64, n: usize) -> Option<usize> {
    if !(0.0..=n as f64).contains(&u) {
        return None;
    }
    Some((u.floor() as usize).min(n - 1))
}

impl ImageRaster<u8> {
    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Binary image as PGM: set pixels white.
    pub fn to_pgm(&self) -> Vec<u8> {
        pgm(self.width, self.height, self.values.iter().map(|&v| if v != 0 { 255 } else { 0 }))
    }
}

impl ImageRaster<f64> {
    /// Linear map of `[0, max]` onto `[0, 255]`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        pgm(self.width, self.height, self.values.iter().map(|&v| (v.max(0.0) * scale).round().min(255.0) as u8))
    }
}

/// Magic bytes opening a raw float grid.
pub const RAW_GRID_MAGIC: &[u8; 8] = b"FIELDF64";
pub const RAW_GRID_VERSION: u32 = 1;
/// `dtype` code for little-endian IEEE-754 binary64.
pub const RAW_GRID_DTYPE_F64: u32 = 1;
pub const RAW_GRID_HEADER_LEN: usize = 64;

impl ImageRaster<f64> {
    /// 64-byte header (magic, version, dtype, H, W, x_min, x_max, y_min,
    /// y_max) followed by the row-major values, all little-endian.
    pub fn to_raw_f64(&self) -> Vec<u8> {
        let half = 0.5 * self.side;
        let mut out = Vec::with_capacity(RAW_GRID_HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(RAW_GRID_MAGIC);
        out.extend_from_slice(&RAW_GRID_VERSION.to_le_bytes());
        out.extend_from_slice(&RAW_GRID_DTYPE_F64.to_le_bytes());
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        for v in [-half, half, -half, half] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        debug_assert_eq!(out.len(), RAW_GRID_HEADER_LEN);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`to_raw_f64`](Self::to_raw_f64).
    pub fn from_raw_f64(bytes: &[u8]) -> Option<Self> {
        let header = bytes.get(..RAW_GRID_HEADER_LEN)?;
        if &header[..8] != RAW_GRID_MAGIC {
            return None;
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        if u32_at(8) != RAW_GRID_VERSION || u32_at(12) != RAW_GRID_DTYPE_F64 {
            return None;
        }
        let (height, width) = (u64_at(16) as usize, u64_at(24) as usize);
        let x_min = f64::from_bits(u64_at(32));
        let x_max = f64::from_bits(u64_at(40));
        let body = &bytes[RAW_GRID_HEADER_LEN..];
        if body.len() != 8 * height.checked_mul(width)? {
            return None;
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Some(ImageRaster { height, width, side: x_max - x_min, values })
    }
}

fn pgm(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Binary image over the domain's bounding square (side `2 radius`).
pub fn rasterize(scene: &Scene, height: usize, width: usize) -> Result<ImageRaster<u8>> {
    rasterize_extent(scene, height, width, 2.0 * scene.doi.radius)
}

/// Binary image over the centered square of the given side. A pixel is set
/// iff at least one scene point falls in it; points outside are ignored.
pub fn rasterize_extent(scene: &Scene, height: usize, width: usize, side: f64) -> Result<ImageRaster<u8>> {
    if height == 0 || width == 0 || !side.is_finite() || side <= 0.0 {
        return Err(Error::Config(format!("raster needs H, W >= 1 and side > 0, got {height}x{width}, {side}")));
    }
    let mut img = ImageRaster::new(height, width, side);
    for &p in &scene.points {
        if let Some((r, c)) = img.pixel_of(p) {
            img.set(r, c, 1);
        }
    }
    Ok(img)
}

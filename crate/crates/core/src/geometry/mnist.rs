//! IDX image files as distributed with MNIST (uncompressed).

use std::path::Path;

use crate::error::{Error, Result};

pub const MNIST_SIDE: usize = 28;
const IMAGE_MAGIC: u32 = 0x0000_0803;
const HEADER_LEN: usize = 16;

/// Row-major 28x28 grayscale digit, 0 (background) to 255.
pub type DigitImage = [u8; MNIST_SIDE * MNIST_SIDE];

pub fn load_mnist_idx(path: impl AsRef<Path>) -> Result<Vec<DigitImage>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|reason| Error::format(path, reason))
}

fn parse_idx(bytes: &[u8]) -> std::result::Result<Vec<DigitImage>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let magic = word(0);
    if magic != IMAGE_MAGIC {
        return Err(format!("bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"));
    }
    let (count, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(format!("images are {rows}x{cols}, expected {MNIST_SIDE}x{MNIST_SIDE}"));
    }
    let body = &bytes[HEADER_LEN..];
    let need = count * rows * cols;
    if body.len() < need {
        return Err(format!("truncated: header declares {count} images ({need} bytes), found {}", body.len()));
    }
    Ok(body[..need].chunks_exact(rows * cols).map(|c| c.try_into().unwrap()).collect())
}

pub fn write_mnist_idx(path: impl AsRef<Path>, images: &[DigitImage]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER_LEN + images.len() * MNIST_SIDE * MNIST_SIDE);
    for word in [IMAGE_MAGIC, images.len() as u32, MNIST_SIDE as u32, MNIST_SIDE as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    super::raster::write_file(path, &out)
}

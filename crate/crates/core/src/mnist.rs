//! IDX dataset ingestion and PGM image export.
//!
//! IDX files are big-endian: a magic word (0x00000803 for u8 images with
//! 3 dimensions, 0x00000801 for u8 labels with 1 dimension), one u32 per
//! dimension, then the payload. Pixels are normalized to [0,1] by /255.
//! Parsing is total: any byte stream yields either a dataset or a format
//! error naming the offending byte offset — never a partial dataset.
//!
//! Images are exported as binary PGM (`P5`), pixels clipped to [0,1] and
//! rounded to u8.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn image_file(self) -> &'static str {
        match self {
            Split::Train => "train-images-idx3-ubyte",
            Split::Test => "t10k-images-idx3-ubyte",
        }
    }

    fn label_file(self) -> &'static str {
        match self {
            Split::Train => "train-labels-idx1-ubyte",
            Split::Test => "t10k-labels-idx1-ubyte",
        }
    }
}

/// Images in [0,1] with optional digit labels.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    pub split: Split,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(format!(
            "truncated header: need bytes {offset}..{end}, file has {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parse an IDX image payload into flattened [0,1] pixel vectors.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(format!(
            "bad image magic 0x{magic:08x} at offset 0, expected 0x{IMAGE_MAGIC:08x}"
        )));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixel_count = rows
        .checked_mul(cols)
        .and_then(|p| p.checked_mul(count))
        .ok_or_else(|| Error::format("image dimensions overflow".to_string()))?;
    let expected = 16 + pixel_count;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "payload length mismatch: header declares {count} images of {rows}x{cols} \
             ({expected} bytes total), file has {} bytes",
            bytes.len()
        )));
    }
    let per_image = rows * cols;
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * per_image;
        images.push(
            bytes[start..start + per_image]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
        );
    }
    Ok(images)
}

/// Parse an IDX label payload.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(format!(
            "bad label magic 0x{magic:08x} at offset 0, expected 0x{LABEL_MAGIC:08x}"
        )));
    }
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "payload length mismatch: header declares {count} labels ({expected} bytes total), \
             file has {} bytes",
            bytes.len()
        )));
    }
    let labels = bytes[8..].to_vec();
    if let Some(pos) = labels.iter().position(|&d| d > 9) {
        return Err(Error::format(format!(
            "label {} at offset {} is not a digit",
            labels[pos],
            8 + pos
        )));
    }
    Ok(labels)
}

pub fn load_idx_images(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    parse_idx_images(&bytes)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    parse_idx_labels(&bytes)
}

/// Serialize images (assumed square) to IDX bytes.
pub fn idx_image_bytes(images: &[Vec<f64>]) -> Result<Vec<u8>> {
    let side = if images.is_empty() {
        28
    } else {
        square_side(images[0].len())?
    };
    let mut out = Vec::with_capacity(16 + images.len() * side * side);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(side as u32).to_be_bytes());
    out.extend_from_slice(&(side as u32).to_be_bytes());
    for img in images {
        if img.len() != side * side {
            return Err(Error::shape("images have inconsistent sizes".to_string()));
        }
        out.extend(img.iter().map(|&p| quantize(p)));
    }
    Ok(out)
}

pub fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Write a dataset to `dir` under the conventional split file names.
pub fn write_dataset(dir: &Path, dataset: &ImageDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(dataset.split.image_file()),
        idx_image_bytes(&dataset.images)?,
    )?;
    if let Some(labels) = &dataset.labels {
        fs::write(dir.join(dataset.split.label_file()), idx_label_bytes(labels))?;
    }
    Ok(())
}

/// Load a split from `dir` using the conventional file names. Labels are
/// optional; 784-pixel images are enforced since everything downstream
/// assumes 28×28.
pub fn load_dataset(dir: &Path, split: Split) -> Result<ImageDataset> {
    let images = load_idx_images(&dir.join(split.image_file()))?;
    if let Some(img) = images.first() {
        if img.len() != 784 {
            return Err(Error::format(format!(
                "expected 28x28 images, found {} pixels",
                img.len()
            )));
        }
    }
    let label_path = dir.join(split.label_file());
    let labels = if label_path.exists() {
        let l = load_idx_labels(&label_path)?;
        if l.len() != images.len() {
            return Err(Error::format(format!(
                "{} labels for {} images",
                l.len(),
                images.len()
            )));
        }
        Some(l)
    } else {
        None
    };
    Ok(ImageDataset {
        images,
        labels,
        split,
    })
}

fn square_side(len: usize) -> Result<usize> {
    let side = (len as f64).sqrt().round() as usize;
    if side * side != len {
        return Err(Error::shape(format!("{len} pixels is not a square image")));
    }
    Ok(side)
}

fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM bytes for a `width × height` image.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pgm pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&p| quantize(p)));
    out
}

/// Export one square image as PGM.
pub fn export_pgm(image: &[f64], path: &Path) -> Result<()> {
    let side = square_side(image.len())?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, pgm_bytes(side, side, image))?;
    Ok(())
}

/// Tile images row-major into a grid with 2-pixel separators at value 128
/// and export as PGM. Trailing empty cells stay at the separator value.
pub fn export_grid(images: &[Vec<f64>], cols: usize, path: &Path) -> Result<()> {
    let bytes = grid_bytes(images, cols)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn grid_bytes(images: &[Vec<f64>], cols: usize) -> Result<Vec<u8>> {
    if images.is_empty() || cols == 0 {
        return Err(Error::param("grid needs at least one image and one column"));
    }
    let side = square_side(images[0].len())?;
    let rows = images.len().div_ceil(cols);
    let sep = 2;
    let width = cols * side + (cols - 1) * sep;
    let height = rows * side + (rows - 1) * sep;
    let mut canvas = vec![128.0 / 255.0; width * height];
    for (i, img) in images.iter().enumerate() {
        if img.len() != side * side {
            return Err(Error::shape("grid images have inconsistent sizes".to_string()));
        }
        let (r, c) = (i / cols, i % cols);
        let top = r * (side + sep);
        let left = c * (side + sep);
        for y in 0..side {
            let dst = (top + y) * width + left;
            canvas[dst..dst + side].copy_from_slice(&img[y * side..(y + 1) * side]);
        }
    }
    Ok(pgm_bytes(width, height, &canvas))
}

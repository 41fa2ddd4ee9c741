//! Shared plumbing for the subcommands.

use std::path::{Path, PathBuf};

use jpmap_core::mnist::{load_dataset, ImageDataset, Split};
use jpmap_core::rng;
use jpmap_core::{Error, Result};

pub const DATA_DIR_ENV: &str = "JPMAP_DATA_DIR";

/// Resolve the dataset directory: flag first, then `$JPMAP_DATA_DIR`.
pub fn resolve_data_dir(flag: &Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir.clone());
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(Error::param(format!(
            "no dataset directory: pass --data-dir or set ${DATA_DIR_ENV}"
        ))),
    }
}

pub fn load_split(flag: &Option<PathBuf>, split: Split) -> Result<ImageDataset> {
    let dir = resolve_data_dir(flag)?;
    load_dataset(&dir, split)
}

/// Experiment images are the first N of the test split after a seeded
/// shuffle; returns the chosen dataset indices.
pub fn shuffled_indices(len: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut order: Vec<usize> = (0..len).collect();
    let mut r = rng::seeded(rng::derive(seed, &[0x5e1ec7]));
    for i in (1..order.len()).rev() {
        let j = r.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Mean squared pixel error on the [0,1] scale, unclipped estimates.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

//! VAE weight files.
//!
//! A model is stored as two files sharing a stem:
//!
//! * `<stem>.manifest` — text key/value: format version, dimensions, layer
//!   table (role, out, in, activation, byte offset of the layer's weights
//!   in the blob) and `log_gamma` as a decimal;
//! * `<stem>.blob` — little-endian IEEE-754 f32, layers concatenated in
//!   declaration order (encoder then decoder), each layer as its row-major
//!   weight matrix followed by its bias.
//!
//! The manifest opens with the magic line `JPMAPVAE1`. Weights are computed
//! in f64 but stored in f32; loading promotes back to f64, so
//! save → load → save is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Layer, MlpParams};
use crate::vae::VaeModel;

pub const MAGIC: &str = "JPMAPVAE1";
pub const FORMAT_VERSION: u32 = 1;

pub fn manifest_path(stem: &Path) -> PathBuf {
    stem.with_extension("manifest")
}

pub fn blob_path(stem: &Path) -> PathBuf {
    stem.with_extension("blob")
}

/// Write `<stem>.manifest` and `<stem>.blob`.
pub fn save_model(model: &VaeModel, stem: &Path) -> Result<()> {
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }

    let mut blob: Vec<u8> = Vec::new();
    let mut manifest = String::new();
    writeln!(manifest, "{MAGIC}").unwrap();
    writeln!(manifest, "version = {FORMAT_VERSION}").unwrap();
    writeln!(manifest, "x_dim = {}", model.x_dim()).unwrap();
    writeln!(manifest, "z_dim = {}", model.z_dim()).unwrap();
    // f32 storage precision; Rust's shortest display round-trips it.
    writeln!(manifest, "log_gamma = {}", model.log_gamma() as f32).unwrap();

    let layer_count = model.encoder().layers().len() + model.decoder().layers().len();
    writeln!(manifest, "layers = {layer_count}").unwrap();
    let mut index = 0;
    for (role, net) in [("enc", model.encoder()), ("dec", model.decoder())] {
        for layer in net.layers() {
            writeln!(
                manifest,
                "layer_{index} = {role} {} {} {} {}",
                layer.out_dim(),
                layer.in_dim(),
                layer.activation.name(),
                blob.len()
            )
            .unwrap();
            for &w in layer.weight.data() {
                blob.extend_from_slice(&(w as f32).to_le_bytes());
            }
            for &b in &layer.bias {
                blob.extend_from_slice(&(b as f32).to_le_bytes());
            }
            index += 1;
        }
    }
    writeln!(manifest, "blob_bytes = {}", blob.len()).unwrap();

    fs::write(manifest_path(stem), manifest)?;
    fs::write(blob_path(stem), blob)?;
    Ok(())
}

struct LayerEntry {
    role: String,
    out: usize,
    input: usize,
    activation: Activation,
    offset: usize,
}

fn manifest_value<'a>(lines: &'a [(String, String)], key: &str) -> Result<&'a str> {
    lines
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::format(format!("manifest is missing '{key}'")))
}

fn parse_usize(v: &str, key: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::format(format!("manifest '{key}' is not an integer: '{v}'")))
}

/// Load a model saved by [`save_model`].
pub fn load_model(stem: &Path) -> Result<VaeModel> {
    let manifest = fs::read_to_string(manifest_path(stem)).map_err(|e| {
        Error::format(format!("cannot read {}: {e}", manifest_path(stem).display()))
    })?;
    let blob =
        fs::read(blob_path(stem)).map_err(|e| {
            Error::format(format!("cannot read {}: {e}", blob_path(stem).display()))
        })?;

    let mut lines = manifest.lines();
    match lines.next() {
        Some(first) if first.trim() == MAGIC => {}
        other => {
            return Err(Error::format(format!(
                "bad magic: expected '{MAGIC}', found '{}'",
                other.unwrap_or("<empty>")
            )))
        }
    }

    let mut pairs = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("malformed manifest line '{line}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }

    let version = parse_usize(manifest_value(&pairs, "version")?, "version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::format(format!("unsupported format version {version}")));
    }
    let x_dim = parse_usize(manifest_value(&pairs, "x_dim")?, "x_dim")?;
    let z_dim = parse_usize(manifest_value(&pairs, "z_dim")?, "z_dim")?;
    let log_gamma: f32 = manifest_value(&pairs, "log_gamma")?
        .parse()
        .map_err(|_| Error::format("log_gamma is not a number".to_string()))?;
    let layer_count = parse_usize(manifest_value(&pairs, "layers")?, "layers")?;
    let blob_bytes = parse_usize(manifest_value(&pairs, "blob_bytes")?, "blob_bytes")?;
    if blob.len() != blob_bytes {
        return Err(Error::format(format!(
            "blob is {} bytes but manifest declares {blob_bytes}",
            blob.len()
        )));
    }

    let mut entries = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let raw = manifest_value(&pairs, &format!("layer_{i}"))?;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::format(format!("malformed layer entry '{raw}'")));
        }
        entries.push(LayerEntry {
            role: fields[0].to_string(),
            out: parse_usize(fields[1], "layer out")?,
            input: parse_usize(fields[2], "layer in")?,
            activation: Activation::from_name(fields[3])?,
            offset: parse_usize(fields[4], "layer offset")?,
        });
    }

    let mut expected_offset = 0usize;
    let mut encoder_layers = Vec::new();
    let mut decoder_layers = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.offset != expected_offset {
            return Err(Error::format(format!(
                "layer {i} declares offset {} but {} bytes precede it",
                e.offset, expected_offset
            )));
        }
        let weight_len = e.out * e.input;
        let total = (weight_len + e.out) * 4;
        if e.offset + total > blob.len() {
            return Err(Error::format(format!(
                "layer {i} needs bytes {}..{} but blob has {}",
                e.offset,
                e.offset + total,
                blob.len()
            )));
        }
        let read_f32 = |at: usize| -> f64 {
            f32::from_le_bytes(blob[at..at + 4].try_into().unwrap()) as f64
        };
        let mut weight = Vec::with_capacity(weight_len);
        for j in 0..weight_len {
            weight.push(read_f32(e.offset + j * 4));
        }
        let mut bias = Vec::with_capacity(e.out);
        for j in 0..e.out {
            bias.push(read_f32(e.offset + (weight_len + j) * 4));
        }
        let layer = Layer {
            weight: Matrix::from_vec(e.out, e.input, weight),
            bias,
            activation: e.activation,
        };
        match e.role.as_str() {
            "enc" => encoder_layers.push(layer),
            "dec" => decoder_layers.push(layer),
            other => return Err(Error::format(format!("unknown layer role '{other}'"))),
        }
        expected_offset += total;
    }
    if expected_offset != blob.len() {
        return Err(Error::format(format!(
            "blob has {} trailing bytes",
            blob.len() - expected_offset
        )));
    }

    let encoder = MlpParams::new(encoder_layers)
        .map_err(|e| Error::format(format!("encoder: {e}")))?;
    let decoder = MlpParams::new(decoder_layers)
        .map_err(|e| Error::format(format!("decoder: {e}")))?;
    if encoder.in_dim() != x_dim || decoder.out_dim() != x_dim {
        return Err(Error::format(format!(
            "manifest declares x_dim = {x_dim} but layers give {} / {}",
            encoder.in_dim(),
            decoder.out_dim()
        )));
    }
    if decoder.in_dim() != z_dim || encoder.out_dim() != 2 * z_dim {
        return Err(Error::format(format!(
            "manifest declares z_dim = {z_dim} but layers give decoder-in {} / encoder-out {}",
            decoder.in_dim(),
            encoder.out_dim()
        )));
    }
    VaeModel::new(encoder, decoder, log_gamma as f64)
        .map_err(|e| Error::format(format!("inconsistent model: {e}")))
}

/// Fingerprint of the weight blob, echoed in experiment reports.
pub fn model_fingerprint(stem: &Path) -> Result<u64> {
    Ok(crate::report::fingerprint(&fs::read(blob_path(stem))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quantized(model: &VaeModel, dir: &Path) -> VaeModel {
        let stem = dir.join("m");
        save_model(model, &stem).unwrap();
        load_model(&stem).unwrap()
    }

    #[test]
    fn round_trip_is_exact_after_f32_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let m1 = quantized(&VaeModel::init(10, &[7], 3, 4), dir.path());
        // Once the weights sit on the f32 grid the round trip is identity.
        let stem = dir.path().join("again");
        save_model(&m1, &stem).unwrap();
        let m2 = load_model(&stem).unwrap();
        assert_eq!(m1, m2);
        let blob1 = fs::read(blob_path(&dir.path().join("m"))).unwrap();
        let blob2 = fs::read(blob_path(&stem)).unwrap();
        assert_eq!(blob1, blob2);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        save_model(&VaeModel::init(6, &[5], 2, 1), &stem).unwrap();
        let blob = fs::read(blob_path(&stem)).unwrap();
        fs::write(blob_path(&stem), &blob[..blob.len() - 8]).unwrap();
        let err = load_model(&stem).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn dimension_mismatch_between_manifest_and_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        save_model(&VaeModel::init(6, &[5], 2, 1), &stem).unwrap();
        let manifest = fs::read_to_string(manifest_path(&stem)).unwrap();
        // Claim z_dim = 8 while the blob is sized for z_dim = 2.
        let tampered = manifest.replace("z_dim = 2", "z_dim = 8");
        fs::write(manifest_path(&stem), tampered).unwrap();
        let err = load_model(&stem).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(err.to_string().contains("z_dim"));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        save_model(&VaeModel::init(6, &[5], 2, 1), &stem).unwrap();
        let manifest = fs::read_to_string(manifest_path(&stem)).unwrap();
        fs::write(manifest_path(&stem), manifest.replace(MAGIC, "JPMAPVAE9")).unwrap();
        assert!(matches!(load_model(&stem), Err(Error::Format(_))));
    }

    #[test]
    fn gamma_survives_the_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = VaeModel::init(6, &[5], 2, 1);
        // Drive log_gamma off the f32 grid; the reload must still agree
        // with its own quantization.
        m = VaeModel::new(m.encoder().clone(), m.decoder().clone(), -2.3456789012345).unwrap();
        let m1 = quantized(&m, dir.path());
        assert_eq!(m1.log_gamma(), (-2.3456789012345f64 as f32) as f64);
    }
}

//! Self-describing binary tensor container.
//!
//! Layout:
//!
//! ```text
//! [ 8 bytes  ] little-endian u64: byte length of the header JSON
//! [ header   ] UTF-8 JSON (magic, format_version, created_unix, config,
//!              manifest)
//! [ padding  ] zeros up to the next 64-byte boundary
//! [ payload  ] raw little-endian tensor bytes, concatenated in manifest
//!              order, each tensor starting at a 64-byte-aligned offset
//!              relative to the payload start
//! ```
//!
//! Manifest entries carry `{name, dtype, shape, byte_offset, byte_length}`
//! with `byte_offset` relative to the payload start. Offsets must be
//! non-overlapping and inside the file; a save -> load round trip is
//! bit-identical for every tensor.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::blocks::{build_model, Model, ModelConfig};
use crate::rng::Rng;
use crate::tensor::FeatureMap;
use crate::{Error, Result};

pub const MAGIC: &str = "PARC2";
pub const FORMAT_VERSION: u32 = 1;
const ALIGN: u64 = 64;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub format_version: u32,
    pub created_unix: u64,
    /// Model configuration echo; absent for bare tensor files (e.g. saved
    /// inputs).
    pub config: Option<ModelConfig>,
    pub manifest: Vec<ManifestEntry>,
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(ALIGN) * ALIGN
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn f32s_to_le_bytes(vals: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vals.len() * 4);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_bytes_to_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn write_container(
    path: &Path,
    config: Option<&ModelConfig>,
    tensors: &[(String, Vec<usize>, Vec<u8>)],
) -> Result<()> {
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (name, shape, bytes) in tensors {
        let offset = align_up(payload.len() as u64);
        payload.resize(offset as usize, 0u8);
        payload.extend_from_slice(bytes);
        manifest.push(ManifestEntry {
            name: name.clone(),
            dtype: "f32".to_string(),
            shape: shape.clone(),
            byte_offset: offset,
            byte_length: bytes.len() as u64,
        });
    }
    let header = Header {
        magic: MAGIC.to_string(),
        format_version: FORMAT_VERSION,
        created_unix: now_unix(),
        config: config.cloned(),
        manifest,
    };
    let header_json = serde_json::to_vec(&header)?;
    let payload_start = align_up(8 + header_json.len() as u64);
    let mut file = Vec::with_capacity(payload_start as usize + payload.len());
    file.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    file.extend_from_slice(&header_json);
    file.resize(payload_start as usize, 0u8);
    file.extend_from_slice(&payload);
    fs::write(path, file)?;
    Ok(())
}

/// Reads and validates the header; returns it with the payload start offset.
pub fn load_header(path: &Path) -> Result<(Header, u64)> {
    let bytes = fs::read(path)?;
    parse_header(&bytes)
}

fn parse_header(bytes: &[u8]) -> Result<(Header, u64)> {
    if bytes.len() < 8 {
        return Err(Error::Checkpoint("file shorter than length prefix".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if 8 + header_len > bytes.len() {
        return Err(Error::Checkpoint(format!(
            "header length {header_len} exceeds file size {}",
            bytes.len()
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?} (expected {MAGIC:?})",
            header.magic
        )));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let payload_start = align_up(8 + header_len as u64);
    let payload_len = (bytes.len() as u64).saturating_sub(payload_start);
    let mut spans: Vec<(u64, u64, &str)> = Vec::with_capacity(header.manifest.len());
    for entry in &header.manifest {
        if entry.dtype != "f32" && entry.dtype != "f64" {
            return Err(Error::Checkpoint(format!(
                "tensor {}: unknown dtype {:?}",
                entry.name, entry.dtype
            )));
        }
        let elem = if entry.dtype == "f32" { 4 } else { 8 };
        let expected = entry.shape.iter().product::<usize>() as u64 * elem;
        if expected != entry.byte_length {
            return Err(Error::Checkpoint(format!(
                "tensor {}: byte length {} does not match shape {:?}",
                entry.name, entry.byte_length, entry.shape
            )));
        }
        if entry.byte_offset + entry.byte_length > payload_len {
            return Err(Error::Checkpoint(format!(
                "tensor {}: bytes {}..{} exceed payload size {payload_len} (truncated file?)",
                entry.name,
                entry.byte_offset,
                entry.byte_offset + entry.byte_length
            )));
        }
        spans.push((entry.byte_offset, entry.byte_length, &entry.name));
    }
    spans.sort_unstable();
    for pair in spans.windows(2) {
        if pair[0].0 + pair[0].1 > pair[1].0 {
            return Err(Error::Checkpoint(format!(
                "tensors {} and {} overlap in the payload",
                pair[0].2, pair[1].2
            )));
        }
    }
    Ok((header, payload_start))
}

/// Saves a model's configuration and every tensor (in manifest order).
pub fn checkpoint_save(model: &Model, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    model.visit_tensors(&mut |name, shape, data| {
        tensors.push((name.to_string(), shape.to_vec(), f32s_to_le_bytes(data)));
    });
    write_container(path, Some(&model.config), &tensors)
}

/// Loads a model checkpoint; validates magic, version, manifest bounds, and
/// per-tensor shape compatibility with the embedded configuration.
pub fn checkpoint_load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    let (header, payload_start) = parse_header(&bytes)?;
    let config = header
        .config
        .clone()
        .ok_or_else(|| Error::Checkpoint("file carries no model configuration".into()))?;
    config.validate()?;
    let payload = &bytes[payload_start as usize..];
    let mut by_name: HashMap<&str, &ManifestEntry> = HashMap::new();
    for entry in &header.manifest {
        if by_name.insert(entry.name.as_str(), entry).is_some() {
            return Err(Error::Checkpoint(format!(
                "tensor {} appears twice in the manifest",
                entry.name
            )));
        }
    }
    let mut used = 0usize;
    let mut model = build_model(&config, &mut Rng::new(0))?;
    model.fill_tensors(&mut |name, shape| {
        let entry = by_name
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing from the manifest")))?;
        if entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: manifest shape {:?} does not match the configuration's {:?}",
                entry.shape, shape
            )));
        }
        if entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: model checkpoints store f32, found {}",
                entry.dtype
            )));
        }
        used += 1;
        let start = entry.byte_offset as usize;
        let end = start + entry.byte_length as usize;
        Ok(le_bytes_to_f32s(&payload[start..end]))
    })?;
    if used != header.manifest.len() {
        let mut expected = Vec::new();
        model.visit_tensors(&mut |n, _, _| expected.push(n.to_string()));
        let extra: Vec<&str> = header
            .manifest
            .iter()
            .map(|e| e.name.as_str())
            .filter(|n| !expected.iter().any(|e| e == n))
            .collect();
        return Err(Error::Checkpoint(format!(
            "manifest carries {} tensors not in the model: {:?}",
            extra.len(),
            extra
        )));
    }
    Ok(model)
}

/// Saves one activation tensor (no configuration echo) under the name
/// `input`.
pub fn input_save(x: &FeatureMap<f32>, path: &Path) -> Result<()> {
    let (n, c, h, w) = x.shape();
    let tensors = vec![(
        "input".to_string(),
        vec![n, c, h, w],
        f32s_to_le_bytes(x.data()),
    )];
    write_container(path, None, &tensors)
}

/// Loads a tensor saved by [`input_save`].
pub fn input_load(path: &Path) -> Result<FeatureMap<f32>> {
    let bytes = fs::read(path)?;
    let (header, payload_start) = parse_header(&bytes)?;
    let entry = header
        .manifest
        .iter()
        .find(|e| e.name == "input")
        .ok_or_else(|| Error::Checkpoint("no `input` tensor in file".into()))?;
    if entry.shape.len() != 4 {
        return Err(Error::Checkpoint(format!(
            "input tensor must be rank 4, got shape {:?}",
            entry.shape
        )));
    }
    if entry.dtype != "f32" {
        return Err(Error::Checkpoint(format!(
            "input tensors store f32, found {}",
            entry.dtype
        )));
    }
    let start = payload_start as usize + entry.byte_offset as usize;
    let data = le_bytes_to_f32s(&bytes[start..start + entry.byte_length as usize]);
    FeatureMap::from_vec(
        (
            entry.shape[0],
            entry.shape[1],
            entry.shape[2],
            entry.shape[3],
        ),
        data,
    )
}

/// Raw payload bytes (for byte-identity comparisons in tests and tools).
pub fn payload_bytes(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let (_, payload_start) = parse_header(&bytes)?;
    Ok(bytes[payload_start as usize..].to_vec())
}

//! Parameter checkpoint: a single binary container (version tag, JSON
//! manifest of name/shape/dtype entries, little-endian f64 payloads) plus a
//! JSON sidecar holding the full model configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"TRAJCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    kind: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    model: ModelConfig,
    norm_scale: Option<f64>,
}

/// The JSON sidecar path for a checkpoint path.
pub fn sidecar_path(path: &Path) -> PathBuf {
    PathBuf::from(format!("{}.json", path.display()))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut manifest = Vec::new();
    let mut payloads: Vec<Vec<f64>> = Vec::new();
    for (name, tensor) in params.named_tensors() {
        manifest.push(ManifestEntry {
            name,
            shape: tensor.shape(),
            dtype: "f64".into(),
            kind: "param".into(),
        });
        payloads.push(tensor.value());
    }
    for (name, data) in params.named_buffers() {
        manifest.push(ManifestEntry {
            name,
            shape: vec![data.len()],
            dtype: "f64".into(),
            kind: "buffer".into(),
        });
        payloads.push(data);
    }
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest serialization: {e}")))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_json)?;
    for payload in &payloads {
        for v in payload {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        model: params.config.clone(),
        norm_scale: params.norm_scale,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Checkpoint(format!("sidecar serialization: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let sidecar_file = sidecar_path(path);
    let sidecar_json = std::fs::read_to_string(&sidecar_file).map_err(|e| {
        Error::Checkpoint(format!(
            "cannot read sidecar {}: {e}",
            sidecar_file.display()
        ))
    })?;
    let sidecar: Sidecar = serde_json::from_str(&sidecar_json)
        .map_err(|e| Error::Checkpoint(format!("sidecar parse: {e}")))?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            sidecar.format_version
        )));
    }

    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut version_bytes = [0u8; 4];
    r.read_exact(&mut version_bytes)?;
    if u32::from_le_bytes(version_bytes) != FORMAT_VERSION {
        return Err(Error::Checkpoint(
            "container/sidecar version mismatch".into(),
        ));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_json)?;
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&manifest_json)
        .map_err(|e| Error::Checkpoint(format!("manifest parse: {e}")))?;

    let mut params = ModelParams::init(&sidecar.model, 0)?;
    params.norm_scale = sidecar.norm_scale;
    let tensors: std::collections::BTreeMap<String, crate::tensor::Tensor> =
        params.named_tensors().into_iter().collect();
    let mut filled = std::collections::BTreeSet::new();

    for entry in &manifest {
        if entry.dtype != "f64" {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let mut data = vec![0.0f64; numel];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        match entry.kind.as_str() {
            "param" => {
                let tensor = tensors.get(&entry.name).ok_or_else(|| {
                    Error::Checkpoint(format!("unknown parameter {}", entry.name))
                })?;
                if tensor.shape() != entry.shape {
                    return Err(Error::Checkpoint(format!(
                        "{}: shape {:?} does not match model {:?}",
                        entry.name,
                        entry.shape,
                        tensor.shape()
                    )));
                }
                tensor.set_data(data)?;
                filled.insert(entry.name.clone());
            }
            "buffer" => {
                if !params.set_buffer(&entry.name, data) {
                    return Err(Error::Checkpoint(format!("unknown buffer {}", entry.name)));
                }
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "{}: unknown entry kind {other}",
                    entry.name
                )))
            }
        }
    }
    if filled.len() != tensors.len() {
        let missing: Vec<&String> = tensors.keys().filter(|k| !filled.contains(*k)).collect();
        return Err(Error::Checkpoint(format!(
            "checkpoint is missing parameters: {missing:?}"
        )));
    }
    Ok(params)
}

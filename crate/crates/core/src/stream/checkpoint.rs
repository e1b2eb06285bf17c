use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StreamConfig, StreamError, StreamParams, TrainReport};
use crate::fsutil::{read_bytes, read_to_string, write_atomic};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
const FORMAT: &str = "wdkg-stream/1";

/// Masking protocol the parameters were trained under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub mask_ratio: f64,
    pub neg_ratio: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: StreamConfig,
    pub n_nodes: usize,
    pub params: StreamParams,
    pub training: TrainReport,
    pub mask: Option<MaskSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    n_nodes: usize,
    config: StreamConfig,
    mask: Option<MaskSpec>,
    tensors: Vec<TensorEntry>,
    training: TrainReport,
}

fn io_err((path, source): (std::path::PathBuf, std::io::Error)) -> StreamError {
    StreamError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `manifest.json` and the little-endian `params.bin` blob into `dir`.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<(), StreamError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err((dir.to_path_buf(), e)))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        n_nodes: ckpt.n_nodes,
        config: ckpt.config.clone(),
        mask: ckpt.mask,
        tensors: ckpt
            .params
            .names()
            .iter()
            .zip(ckpt.params.tensors())
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        training: ckpt.training.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    json.push('\n');
    let mut blob = Vec::with_capacity(ckpt.params.n_scalars() * 8);
    for t in ckpt.params.tensors() {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(&dir.join(PARAMS_FILE), &blob).map_err(io_err)?;
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes()).map_err(io_err)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, StreamError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bad = |message: String| StreamError::Checkpoint {
        path: manifest_path.display().to_string(),
        message,
    };
    let text = read_to_string(&manifest_path).map_err(io_err)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(bad(format!("unsupported format {:?}", manifest.format)));
    }
    manifest
        .config
        .validate(manifest.n_nodes)
        .map_err(|e| bad(e.to_string()))?;
    let blob = read_bytes(&dir.join(PARAMS_FILE)).map_err(io_err)?;
    let expected: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if blob.len() != expected * 8 {
        return Err(StreamError::Checkpoint {
            path: dir.join(PARAMS_FILE).display().to_string(),
            message: format!("expected {} bytes, found {}", expected * 8, blob.len()),
        });
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let tensors = manifest
        .tensors
        .iter()
        .map(|entry| {
            let len = entry.shape.iter().product();
            Tensor::new(entry.shape.clone(), values.by_ref().take(len).collect()).expect("length checked")
        })
        .collect();
    let params = StreamParams::from_tensors(&manifest.config, tensors)?;
    if let Some(name) = params
        .names()
        .iter()
        .zip(&manifest.tensors)
        .find(|(a, b)| **a != b.name)
    {
        return Err(bad(format!("tensor {:?} is out of order", name.1.name)));
    }
    Ok(Checkpoint {
        config: manifest.config,
        n_nodes: manifest.n_nodes,
        params,
        training: manifest.training,
        mask: manifest.mask,
    })
}

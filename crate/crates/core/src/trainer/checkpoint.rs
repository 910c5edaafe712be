//! Checkpoint directories: `manifest.json` plus a raw little-endian `weights.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AdiosError, Result};
use crate::numerics::{ParamSet, Tensor};
use crate::trainer::config::TrainConfig;
use crate::trainer::steps::TrainState;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";

const GROUPS: [&str; 4] = ["encoder.", "occluder.", "momentum.encoder.", "momentum.occluder."];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: usize,
    pub byte_len: usize,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedState {
    pub seed: u64,
    pub data_seed: u64,
    /// Steps already taken; per-step streams are indexed by this counter.
    pub next_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub step: usize,
    pub epoch: usize,
    pub seed_state: SeedState,
    pub tensors: Vec<TensorRecord>,
}

/// A loaded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

fn groups(state: &TrainState) -> [(&'static str, Option<&ParamSet<f32>>); 4] {
    [
        (GROUPS[0], Some(&state.encoder)),
        (GROUPS[1], state.occluder.as_ref()),
        (GROUPS[2], Some(&state.encoder_momentum)),
        (GROUPS[3], Some(&state.occluder_momentum)),
    ]
}

pub fn save_checkpoint(state: &TrainState, config: &TrainConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AdiosError::io(dir, e))?;
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (prefix, set) in groups(state) {
        let Some(set) = set else { continue };
        for (name, p) in set.iter() {
            let offset = blob.len();
            for v in p.tensor.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorRecord {
                name: format!("{prefix}{name}"),
                shape: p.tensor.shape().to_vec(),
                dtype: "f32".into(),
                byte_offset: offset,
                byte_len: blob.len() - offset,
                trainable: p.trainable,
            });
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: config.to_value(),
        step: state.step,
        epoch: state.epoch,
        seed_state: SeedState { seed: config.seed, data_seed: config.data_seed(), next_step: state.step },
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, text).map_err(|e| AdiosError::io(&mpath, e))?;
    let wpath = dir.join(WEIGHTS);
    fs::write(&wpath, blob).map_err(|e| AdiosError::io(&wpath, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| AdiosError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| AdiosError::Checkpoint(format!("{}: malformed manifest: {e}", mpath.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(AdiosError::Checkpoint(format!(
            "unknown checkpoint format version {} (supported: {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = read_manifest(dir)?;
    let config: TrainConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| AdiosError::Checkpoint(format!("config snapshot: {e}")))?;
    let wpath = dir.join(WEIGHTS);
    let blob = fs::read(&wpath).map_err(|e| AdiosError::io(&wpath, e))?;

    let mut sets: [ParamSet<f32>; 4] = Default::default();
    let mut expected = 0usize;
    for rec in &manifest.tensors {
        if rec.dtype != "f32" {
            return Err(AdiosError::Checkpoint(format!("tensor {}: unsupported dtype {}", rec.name, rec.dtype)));
        }
        let numel: usize = rec.shape.iter().product();
        if rec.byte_len != numel * 4 || rec.byte_offset != expected {
            return Err(AdiosError::Checkpoint(format!(
                "tensor {}: record (offset {}, {} bytes) inconsistent with shape {:?}",
                rec.name, rec.byte_offset, rec.byte_len, rec.shape
            )));
        }
        let end = rec.byte_offset + rec.byte_len;
        if end > blob.len() {
            return Err(AdiosError::Checkpoint(format!(
                "tensor {}: length mismatch, needs bytes {}..{end} but {} has {}",
                rec.name,
                rec.byte_offset,
                WEIGHTS,
                blob.len()
            )));
        }
        expected = end;
        let data: Vec<f32> = blob[rec.byte_offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(&rec.shape, data)?;
        // Longest matching prefix first, so momentum groups win over plain ones.
        let (gi, prefix) = GROUPS
            .iter()
            .enumerate()
            .filter(|(_, p)| rec.name.starts_with(*p))
            .max_by_key(|(_, p)| p.len())
            .ok_or_else(|| AdiosError::Checkpoint(format!("tensor {}: unknown group", rec.name)))?;
        sets[gi].insert(&rec.name[prefix.len()..], tensor, rec.trainable);
    }
    if expected != blob.len() {
        return Err(AdiosError::Checkpoint(format!(
            "length mismatch: manifest covers {expected} bytes, {WEIGHTS} has {}",
            blob.len()
        )));
    }
    let [encoder, occluder, encoder_momentum, occluder_momentum] = sets;
    Ok(Checkpoint {
        config,
        state: TrainState {
            encoder,
            occluder: (!occluder.is_empty()).then_some(occluder),
            encoder_momentum,
            occluder_momentum,
            step: manifest.step,
            epoch: manifest.epoch,
        },
    })
}

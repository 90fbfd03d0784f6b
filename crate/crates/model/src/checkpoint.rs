//! On-disk model: `manifest.json`, `weights.bin` (little-endian f32, arrays
//! back to back in manifest order) and `vocab.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use qtranspile_core::Vocabulary;

use crate::config::ModelConfig;
use crate::layout::{ArrayInfo, Layout};
use crate::model::Transformer;
use crate::scalar::Scalar;
use crate::ModelError;

pub const FORMAT: &str = "qtranspile-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: usize,
    pub num_params: usize,
    pub arrays: Vec<ArrayInfo>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save<T: Scalar>(dir: &Path, model: &Transformer<T>, vocab: &Vocabulary, step: usize) -> Result<(), ModelError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        config: model.cfg.clone(),
        vocab_hash: vocab.content_hash(),
        step,
        num_params: model.num_params(),
        arrays: model.layout.arrays.clone(),
    };
    let mut blob = Vec::with_capacity(model.params.len() * 4);
    for v in &model.params {
        blob.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
    let p = dir.join("weights.bin");
    fs::write(&p, blob).map_err(io(&p))?;
    let p = dir.join("vocab.json");
    fs::write(&p, vocab.to_json()).map_err(io(&p))?;
    let p = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, json + "\n").map_err(io(&p))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ModelError> {
    let p = dir.join("manifest.json");
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", p.display())))?;
    if m.format != FORMAT {
        return Err(ModelError::Checkpoint(format!("unsupported format `{}`", m.format)));
    }
    Ok(m)
}

pub struct Loaded<T> {
    pub model: Transformer<T>,
    pub vocab: Vocabulary,
    pub manifest: Manifest,
}

/// Loads a checkpoint, checking array shapes against the configuration and
/// the stored vocabulary against its hash.
pub fn load<T: Scalar>(dir: &Path) -> Result<Loaded<T>, ModelError> {
    let manifest = read_manifest(dir)?;
    let layout = Layout::new(&manifest.config);
    if layout.arrays != manifest.arrays {
        return Err(ModelError::Checkpoint("array index does not match the configuration".into()));
    }
    let p = dir.join("vocab.json");
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    let vocab = Vocabulary::from_json(&text).map_err(ModelError::Checkpoint)?;
    if vocab.content_hash() != manifest.vocab_hash {
        return Err(ModelError::VocabMismatch {
            expected: manifest.vocab_hash.clone(),
            found: vocab.content_hash(),
        });
    }
    if vocab.len() != manifest.config.vocab_size {
        return Err(ModelError::Checkpoint(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            manifest.config.vocab_size
        )));
    }
    let p = dir.join("weights.bin");
    let blob = fs::read(&p).map_err(io(&p))?;
    if blob.len() != layout.total * 4 {
        return Err(ModelError::Checkpoint(format!(
            "weights.bin holds {} bytes, expected {}",
            blob.len(),
            layout.total * 4
        )));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    let model = Transformer::from_params(manifest.config.clone(), params)?;
    Ok(Loaded { model, vocab, manifest })
}

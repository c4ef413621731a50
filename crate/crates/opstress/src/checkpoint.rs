use std::fs;
use std::path::Path;

use opstress_core::nn::ParamStore;
use opstress_core::surrogates::{ModelSpec, Surrogate};
use opstress_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::container::{f32_from_le, f32_to_le, read_json, write_json, MANIFEST};
use crate::error::{HarnessError, Result};

pub const WEIGHTS: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub spec: ModelSpec,
    /// Optimizer steps taken.
    pub step: usize,
    pub seed: u64,
    pub trainable_params: usize,
    /// Parameter names in `weights.bin` order, buffers included.
    pub layout: Vec<String>,
}

/// A model and its weights, ready for inference.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: Surrogate,
    pub store: ParamStore<f32>,
}

impl Checkpoint {
    pub fn new(model: Surrogate, store: ParamStore<f32>, step: usize, seed: u64) -> Self {
        let manifest = CheckpointManifest {
            spec: model.spec().clone(),
            step,
            seed,
            trainable_params: store.trainable_count(),
            layout: store.iter().map(|(_, p)| p.name.clone()).collect(),
        };
        Self { manifest, model, store }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        let weights = dir.join(WEIGHTS);
        fs::write(&weights, f32_to_le(&self.store.flatten())).map_err(HarnessError::io(&weights))?;
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST))?;
        let mut store = ParamStore::new();
        let model = Surrogate::build(&manifest.spec, &mut store, 0)?;
        let layout: Vec<String> = store.iter().map(|(_, p)| p.name.clone()).collect();
        if layout != manifest.layout {
            return Err(CoreError::InvalidInput(format!("{}: parameter layout does not match the spec", dir.display())).into());
        }
        let path = dir.join(WEIGHTS);
        let bytes = fs::read(&path).map_err(HarnessError::io(&path))?;
        store.load_flat(&f32_from_le(&bytes, &path)?)?;
        Ok(Self { manifest, model, store })
    }
}

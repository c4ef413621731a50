use std::fs;
use std::path::{Path, PathBuf};

use opstress_core::dataset::{make_batch, split, Dataset};
use opstress_core::nn::{Adam, AdamConfig, Graph, Mode, ParamStore, Real};
use opstress_core::surrogates::{ModelKind, ModelSpec, Surrogate};
use opstress_core::Error as CoreError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::container::{read_container, read_json, write_json};
use crate::error::{HarnessError, Result};
use crate::generate::mix_seed;

pub const DEFAULT_TEST_EVERY: usize = 500;
pub const HISTORY: &str = "history.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Architecture to train: an explicit spec, or a kind sized for the
/// dataset grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Spec(ModelSpec),
    Sized { kind: ModelKind, target_params: usize },
}

impl ModelChoice {
    /// The spec for an `nx×ny` dataset. The published architectures are
    /// used when the target is the published count on a 128×128 grid.
    pub fn resolve(&self, nx: usize, ny: usize) -> Result<ModelSpec> {
        let spec = match self {
            ModelChoice::Spec(spec) => spec.clone(),
            ModelChoice::Sized { kind, target_params } => {
                let paper = ModelSpec::paper(*kind)?;
                if nx != ny {
                    return Err(HarnessError::Invalid(format!("sized models need a square grid, got {nx}x{ny}")));
                }
                if nx == paper.nx && *target_params == paper.target_params {
                    paper
                } else {
                    ModelSpec::scaled(*kind, nx, *target_params)?
                }
            }
        };
        if (spec.nx, spec.ny) != (nx, ny) {
            return Err(CoreError::InvalidInput(format!(
                "model grid {}x{} does not match dataset grid {nx}x{ny}",
                spec.nx, spec.ny
            ))
            .into());
        }
        Ok(spec)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelChoice::Spec(s) => s.kind,
            ModelChoice::Sized { kind, .. } => *kind,
        }
    }
}

fn default_lr0() -> f64 {
    AdamConfig::default().lr0
}

fn default_decay() -> f64 {
    AdamConfig::default().decay
}

fn default_test_every() -> usize {
    DEFAULT_TEST_EVERY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    pub seed: u64,
    pub model: ModelChoice,
    pub dataset: PathBuf,
    /// Output directory for checkpoints and the loss history.
    pub out: PathBuf,
    /// Intermediate checkpoint interval in steps; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_test_every")]
    pub test_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.test_every == 0 {
            return Err(HarnessError::Invalid("steps, batch_size and test_every must be at least 1".into()));
        }
        if !(self.lr0 > 0.0 && self.decay >= 0.0) {
            return Err(HarnessError::Invalid(format!("invalid learning-rate schedule lr0={} decay={}", self.lr0, self.decay)));
        }
        Ok(())
    }

    /// Reads a TOML or JSON config; relative paths resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut config: TrainConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(HarnessError::json(path))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config { path: path.into(), message: e.to_string() })?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.dataset, &mut config.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr0: self.lr0, decay: self.decay, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Training loss of every step.
    pub train: Vec<f64>,
    /// `(steps taken, mean test loss)`.
    pub test: Vec<(usize, f64)>,
}

impl LossHistory {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: LossHistory,
}

/// Endless stream of shuffled mini-batches: each pass over the training
/// set is a fresh permutation and a trailing partial batch is dropped.
struct Sampler {
    indices: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(indices: &[usize], seed: u64) -> Self {
        let mut s = Self { indices: indices.to_vec(), cursor: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.indices.shuffle(&mut s.rng);
        s
    }

    fn next(&mut self, batch: usize) -> &[usize] {
        let batch = batch.min(self.indices.len());
        if self.cursor + batch > self.indices.len() {
            self.indices.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += batch;
        &self.indices[self.cursor - batch..self.cursor]
    }
}

/// Mean scaled MSE over `indices` in evaluation mode.
pub fn mean_loss(model: &Surrogate, store: &ParamStore<f32>, data: &Dataset, indices: &[usize], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in indices.chunks(batch.max(1)) {
        let b = make_batch::<f32>(data, chunk, model.kind())?;
        let mut g = Graph::inference(store);
        let y = model.forward(&mut g, &b.input)?;
        let t = g.input(b.target);
        let l = g.mse(y, t)?;
        total += g.value(l).data()[0].as_f64() * chunk.len() as f64;
    }
    Ok(total / indices.len().max(1) as f64)
}

/// Trains `spec` on the given split. `on_checkpoint` is called at the
/// checkpoint cadence with the step count and current weights.
pub fn train_model(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    spec: &ModelSpec,
    config: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_idx.is_empty() {
        return Err(HarnessError::Invalid("training split is empty".into()));
    }
    let mut store = ParamStore::<f32>::new();
    let model = Surrogate::build(spec, &mut store, config.seed)?;
    let mut adam = Adam::new(config.adam(), &store);
    let mut sampler = Sampler::new(train_idx, mix_seed(config.seed, u64::MAX));
    let mut history = LossHistory { train: Vec::with_capacity(config.steps), test: Vec::new() };

    for step in 0..config.steps {
        let batch = make_batch::<f32>(data, sampler.next(config.batch_size), spec.kind)?;
        let mut g = Graph::new(&store, Mode::Train, mix_seed(config.seed, step as u64));
        let y = model.forward(&mut g, &batch.input)?;
        let t = g.input(batch.target);
        let loss = g.mse(y, t)?;
        let value = g.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(CoreError::Diverged { step }.into());
        }
        let updates = g.take_buffer_updates();
        let grads = g.backward(loss)?;
        store.apply_buffer_updates(updates);
        adam.step(&mut store, &grads);
        if !store.is_finite() {
            return Err(CoreError::Diverged { step }.into());
        }
        history.train.push(value);

        let done = step + 1;
        if !test_idx.is_empty() && (done % config.test_every == 0 || done == config.steps) {
            let test = mean_loss(&model, &store, data, test_idx, config.batch_size)?;
            if !test.is_finite() {
                return Err(CoreError::Diverged { step }.into());
            }
            history.test.push((done, test));
        }
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.steps {
            on_checkpoint(done, &Checkpoint::new(model.clone(), store.clone(), done, config.seed))?;
        }
    }
    Ok(TrainOutcome { checkpoint: Checkpoint::new(model, store, config.steps, config.seed), history })
}

/// Trains from a config file's settings: reads the dataset, splits it with
/// the manifest seed, and writes `checkpoint/`, intermediate
/// `checkpoint-<step>/` directories and `history.json` under `config.out`.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = read_container(&config.dataset)?;
    let (train_idx, test_idx) = split(&data.manifest, data.manifest.split_seed);
    let spec = config.model.resolve(data.manifest.nx, data.manifest.ny)?;
    fs::create_dir_all(&config.out).map_err(HarnessError::io(&config.out))?;
    let out = config.out.clone();
    let outcome = train_model(&data, &train_idx, &test_idx, &spec, config, |step, ckpt| {
        ckpt.save(&out.join(format!("{CHECKPOINT_DIR}-{step}")))
    })?;
    outcome.checkpoint.save(&config.out.join(CHECKPOINT_DIR))?;
    outcome.history.save(&config.out.join(HISTORY))?;
    Ok(outcome)
}

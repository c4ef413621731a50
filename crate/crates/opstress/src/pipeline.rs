//! End-to-end runs: topology optimization, simulation, dataset, training
//! and evaluation of every model kind at a fixed scale.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use opstress_core::dataset::split;
use opstress_core::surrogates::{ModelKind, ModelSpec};
use opstress_core::topopt::ToSettings;
use serde::{Deserialize, Serialize};

use crate::container::{write_container, write_designs, write_json};
use crate::error::{HarnessError, Result};
use crate::evaluate::{evaluate, write_report};
use crate::generate::{generate_designs, mix_seed, simulate_designs};
use crate::train::{train_model, ModelChoice, TrainConfig, CHECKPOINT_DIR, DEFAULT_TEST_EVERY, HISTORY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Seconds: 16×16 grid, 30 samples, a few hundred steps.
    Toy,
    /// 32×32 grid, 60 designs × 3 loads, ~0.2M-parameter models, 5000 steps.
    Desk,
    /// 128×128 grid, 3000 designs × 5 loads, published models, 150000 steps.
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "toy" => Ok(Scale::Toy),
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale {s:?} (expected toy, desk or paper)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Toy => "toy",
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub grid: usize,
    pub designs: usize,
    pub loads_per_design: usize,
    pub increments: usize,
    pub steps: usize,
    pub batch_size: usize,
    /// Parameter budget per model; the published count selects the
    /// published architecture on the full grid.
    pub target_params: [usize; 3],
}

impl Scale {
    pub fn config(self) -> ScaleConfig {
        match self {
            Scale::Toy => ScaleConfig {
                grid: 16,
                designs: 10,
                loads_per_design: 3,
                increments: 20,
                steps: 200,
                batch_size: 4,
                target_params: [50_000; 3],
            },
            Scale::Desk => ScaleConfig {
                grid: 32,
                designs: 60,
                loads_per_design: 3,
                increments: 20,
                steps: 5000,
                batch_size: 16,
                target_params: [200_000; 3],
            },
            Scale::Paper => ScaleConfig {
                grid: 128,
                designs: 3000,
                loads_per_design: 5,
                increments: 20,
                steps: 150_000,
                batch_size: 16,
                target_params: ModelKind::ALL.map(|k| ModelSpec::paper(k).expect("published spec").target_params),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub kind: ModelKind,
    pub params: usize,
    pub final_train_loss: f64,
    pub final_test_loss: Option<f64>,
    pub test_mrl2e: f64,
    pub predict_seconds_per_case: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scale: Scale,
    pub seed: u64,
    pub config: ScaleConfig,
    pub samples: usize,
    pub skipped_simulations: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub simulate_seconds_per_case: f64,
    pub models: Vec<ModelRun>,
}

impl PipelineReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelRun> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

/// Layout of a pipeline output directory.
pub struct PipelinePaths {
    pub root: PathBuf,
}

impl PipelinePaths {
    pub fn designs(&self) -> PathBuf {
        self.root.join("designs")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.root.join(kind.name())
    }

    pub fn history(&self, kind: ModelKind) -> PathBuf {
        self.model(kind).join(HISTORY)
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("pipeline.json")
    }
}

/// Runs every stage for `kinds` and writes all artifacts under `out`.
pub fn run_pipeline(config: &ScaleConfig, scale: Scale, seed: u64, kinds: &[ModelKind], out: &Path) -> Result<PipelineReport> {
    let paths = PipelinePaths { root: out.to_path_buf() };
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;

    let designs = generate_designs(config.designs, config.grid, config.grid, seed, &ToSettings::default())?;
    write_designs(&designs, &paths.designs())?;
    let sims = simulate_designs(&designs, config.loads_per_design, config.increments, mix_seed(seed, 1))?;
    for f in &sims.failures {
        eprintln!("warning: skipped design {} load {}: {}", f.provenance.design, f.provenance.load_index, f.error);
    }
    let data = sims.dataset;
    write_container(&data, &paths.dataset())?;
    let (train_idx, test_idx) = split(&data.manifest, data.manifest.split_seed);

    let mut models = Vec::new();
    for &kind in kinds {
        let k = ModelKind::ALL.iter().position(|&x| x == kind).expect("known kind");
        let choice = ModelChoice::Sized { kind, target_params: config.target_params[k] };
        let spec = choice.resolve(config.grid, config.grid)?;
        let dir = paths.model(kind);
        let train_config = TrainConfig {
            steps: config.steps,
            batch_size: config.batch_size,
            lr0: opstress_core::nn::AdamConfig::default().lr0,
            decay: opstress_core::nn::AdamConfig::default().decay,
            seed: mix_seed(seed, 2 + k as u64),
            model: ModelChoice::Spec(spec.clone()),
            dataset: paths.dataset(),
            out: dir.clone(),
            checkpoint_every: 0,
            test_every: DEFAULT_TEST_EVERY,
        };
        eprintln!("training {} ({} parameters, {} steps)", kind.name(), spec.closed_form_params(), config.steps);
        let outcome = train_model(&data, &train_idx, &test_idx, &spec, &train_config, |_, _| Ok(()))?;
        fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
        write_json(&dir.join("train.json"), &train_config)?;
        outcome.checkpoint.save(&dir.join(CHECKPOINT_DIR))?;
        outcome.history.save(&paths.history(kind))?;
        let (report, predictions) = evaluate(&outcome.checkpoint, &data, &test_idx)?;
        write_report(&report, &data, &test_idx, &predictions, &dir.join("report"))?;
        eprintln!("{}: test MRL2E {:.4}", kind.name(), report.mean());
        models.push(ModelRun {
            kind,
            params: outcome.checkpoint.store.trainable_count(),
            final_train_loss: *outcome.history.train.last().expect("at least one step"),
            final_test_loss: outcome.history.test.last().map(|t| t.1),
            test_mrl2e: report.mean(),
            predict_seconds_per_case: report.seconds_per_case,
        });
    }
    let report = PipelineReport {
        scale,
        seed,
        config: config.clone(),
        samples: data.len(),
        skipped_simulations: sims.failures.len(),
        train_samples: train_idx.len(),
        test_samples: test_idx.len(),
        simulate_seconds_per_case: sims.seconds_per_case,
        models,
    };
    write_json(&paths.report(), &report)?;
    Ok(report)
}

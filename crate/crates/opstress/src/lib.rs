//! File formats, batch generation, the training harness, evaluation
//! reports and the command-line front end around [`opstress_core`].

pub mod checkpoint;
pub mod container;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod pipeline;
pub mod render;
pub mod train;

pub use checkpoint::Checkpoint;
pub use container::{read_container, read_designs, write_container, write_designs, DesignSet};
pub use error::{HarnessError, Result};
pub use evaluate::{evaluate, predict, report_from_predictions, write_report, EvalReport, Prediction};
pub use generate::{generate_designs, simulate_designs, simulate_timed, worker_pool};
pub use pipeline::{run_pipeline, PipelineReport, Scale, ScaleConfig};
pub use train::{train, train_model, LossHistory, ModelChoice, TrainConfig, TrainOutcome};

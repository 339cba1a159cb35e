//! Model assembly, optimisation loop, evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod model;
pub mod trainer;

pub use checkpoint::{Checkpoint, StopState, CHECKPOINT_VERSION};
pub use config::{Config, Split, SplitConfig, SplitName, TrainConfig};
pub use metrics::{mae, prediction_loss, rmse, total_loss, EvalReport};
pub use model::{BatchOutput, Context, Model, Prediction};
pub use trainer::{evaluate, evaluate_set, paper_set, train, write_predictions, EpochLog, PaperSet, SemanticLog, TrainOutcome};

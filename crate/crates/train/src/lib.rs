//! Training loops for CAE pre-training and classifier fine-tuning, with
//! deterministic batching, subject-aware cross-validation, grid search and
//! run-directory artifacts.

mod batch;
mod cae;
mod classifier;
mod config;
mod cv;
mod data;
mod engine;
mod error;
mod grid;
mod record;
mod rundir;

pub use batch::epoch_batches;
pub use cae::{evaluate_cae, tagged_checkpoint, train_cae, CaeEval, CaeRun, Reconstructor, EVAL_BATCH};
pub use classifier::{build_classifier, evaluate_classifier, norm_buffer_checksum, train_classifier, ClassifierRun};
pub use config::{InitMode, TrainConfig, Transfer, DEFAULT_LR, GRID_BATCH_SIZES, GRID_EPOCHS};
pub use cv::{crossval_run, fold_seed, CvFolds, CvResult, FoldRun, METRICS};
pub use data::MapSet;
pub use error::{Result, TrainError};
pub use grid::{config_matrix, grid_search, select_best, GridEntry, GridResult};
pub use record::EpochRecord;
pub use rundir::RunDir;

//! Model assembly, training, evaluation and ablations.
//!
//! A [`Model`] bins a stream into `T` steps, builds one count map per step,
//! reads it out with trainable (or frozen Gabor) stride-`K` kernels and feeds
//! the response maps to the spiking transformer. Inputs are prepared once
//! per sample because count maps do not depend on the weights.

mod ablation;
mod config;
mod data;
mod metrics;
mod model;
mod train;

pub use ablation::{comparison_grid, run_ablation, time_length_sweep, AblationRow, TimeLengthRow};
pub use config::{Backbone, ModelConfig, OptimizerKind, TrainConfig, Variant, GABOR_CHANNELS, PRESETS};
pub use data::{Dataset, Sample, SyntheticDataset, MANIFEST};
pub use metrics::{write_json_line, ConfusionMatrix, EpochRecord, Metrics, SplitRecord, Summary};
pub use model::{build_model, prepare_input, ForwardOut, Model, Prediction, SampleGrad};
pub use train::{evaluate, train, train_split, Evaluation, TrainSink};

use serde::Serialize;

use super::config::{Backbone, ModelConfig, TrainConfig, Variant};
use super::data::Dataset;
use super::model::Model;
use super::train::{evaluate, train, TrainSink};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub backbone: String,
    pub parameters: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub seconds: f64,
}

/// The comparison structures: trainable readout, Gabor readout and no event
/// convolution, each with the spiking transformer and the FC baseline.
pub fn comparison_grid() -> Vec<(Variant, Backbone)> {
    let mut grid = Vec::new();
    for backbone in [Backbone::Spikformer, Backbone::FullyConnected] {
        for variant in Variant::ALL {
            grid.push((variant, backbone));
        }
    }
    grid
}

/// Trains one fresh model per structure on the same split.
pub fn run_ablation(
    base: &ModelConfig,
    structures: &[(Variant, Backbone)],
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    structures
        .iter()
        .map(|&(variant, backbone)| {
            let mc = ModelConfig {
                variant,
                backbone,
                ..base.clone()
            };
            let mut model = Model::<f32>::new(mc)?;
            let m = train(&mut model, train_set, test_set, cfg, TrainSink::default())?;
            Ok(AblationRow {
                variant: variant.name().to_string(),
                backbone: backbone.name().to_string(),
                parameters: m.parameters,
                train_accuracy: m.final_train_accuracy(),
                test_accuracy: m.final_test_accuracy(),
                best_test_accuracy: m.best_test_accuracy,
                seconds: m.wall_clock_seconds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeLengthRow {
    /// `None` is the full stream.
    pub time_length_us: Option<u32>,
    pub accuracy: f64,
}

/// Accuracy of one trained model on prefixes of the test streams.
pub fn time_length_sweep(model: &Model<f32>, test_set: &Dataset, lengths: &[u32]) -> Result<Vec<TimeLengthRow>> {
    let mut rows = vec![TimeLengthRow {
        time_length_us: None,
        accuracy: evaluate(model, test_set, None)?.accuracy,
    }];
    for &tl in lengths {
        rows.push(TimeLengthRow {
            time_length_us: Some(tl),
            accuracy: evaluate(model, test_set, Some(tl))?.accuracy,
        });
    }
    Ok(rows)
}

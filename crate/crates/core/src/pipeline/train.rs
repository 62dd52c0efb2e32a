use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{OptimizerKind, TrainConfig};
use super::data::Dataset;
use super::metrics::{write_json_line, ConfusionMatrix, EpochRecord, Metrics};
use super::model::Model;
use crate::autograd::{save_checkpoint, Adam, Optimizer, Sgd, Tensor};
use crate::error::{Error, Result};
use crate::event::truncate_prefix;
use crate::real::Real;

/// Where training writes its side outputs.
#[derive(Default)]
pub struct TrainSink<'a> {
    /// Checkpoint rewritten whenever test accuracy improves.
    pub checkpoint: Option<PathBuf>,
    /// Receives one JSON line per split per epoch as training runs.
    pub log: Option<&'a mut dyn Write>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

fn prepare_all<F: Real>(model: &Model<F>, data: &Dataset, time_length: Option<u32>) -> Result<Vec<Tensor<F>>> {
    data.samples
        .par_iter()
        .map(|s| match time_length {
            Some(tl) => model.prepare(&truncate_prefix(&s.stream, tl)?),
            None => model.prepare(&s.stream),
        })
        .collect()
}

fn check_labels<F: Real>(model: &Model<F>, data: &Dataset) -> Result<()> {
    let c = model.config().num_classes;
    match data.samples.iter().find(|s| s.label >= c) {
        Some(s) => Err(Error::arg(format!("label {} outside the model's {c} classes", s.label))),
        None => Ok(()),
    }
}

fn evaluate_prepared<F: Real>(model: &Model<F>, inputs: &[Tensor<F>], labels: &[usize]) -> Result<Evaluation> {
    let results = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &y)| model.sample_loss(x, y))
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = ConfusionMatrix::new(model.config().num_classes);
    let mut loss = 0.0;
    for ((l, d), &y) in results.iter().zip(labels) {
        loss += l;
        confusion.record(y, *d);
    }
    Ok(Evaluation {
        loss: loss / labels.len().max(1) as f64,
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// Accuracy, mean loss and confusion matrix on `data`. With `time_length`,
/// every stream is first cut to its prefix `t < time_length`.
pub fn evaluate<F: Real>(model: &Model<F>, data: &Dataset, time_length: Option<u32>) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::arg("evaluation dataset is empty"));
    }
    if time_length == Some(0) {
        return Err(Error::arg("time length must be positive"));
    }
    check_labels(model, data)?;
    let inputs = prepare_all(model, data, time_length)?;
    evaluate_prepared(model, &inputs, &data.labels())
}

/// Random `train_fraction` split of `data`, then [`train`].
pub fn train_split<F: Real>(
    model: &mut Model<F>,
    data: &Dataset,
    cfg: &TrainConfig,
    sink: TrainSink<'_>,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::arg("training dataset is empty"));
    }
    let (tr, te) = data.split(cfg.train_fraction, cfg.seed)?;
    train(model, &tr, &te, cfg, sink)
}

/// Mini-batch training with cross-entropy on the rate logits. Per-sample
/// gradients are computed in parallel and summed in sample order, so runs are
/// reproducible for a fixed seed regardless of thread count.
pub fn train<F: Real>(
    model: &mut Model<F>,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut sink: TrainSink<'_>,
) -> Result<Metrics> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::arg("training dataset is empty"));
    }
    if test_set.is_empty() {
        return Err(Error::arg("test dataset is empty"));
    }
    check_labels(model, train_set)?;
    check_labels(model, test_set)?;
    let started = Instant::now();
    let train_x = prepare_all(model, train_set, None)?;
    let train_y = train_set.labels();
    let test_x = prepare_all(model, test_set, None)?;
    let test_y = test_set.labels();

    let mut optimizer: Box<dyn Optimizer<F>> = match cfg.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd { lr: cfg.lr }),
        OptimizerKind::Adam => Box::new(Adam::<F>::new(cfg.lr)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut confusion = ConfusionMatrix::new(model.config().num_classes);

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&i| model.sample_grad(&train_x[i], train_y[i]))
                .collect::<Result<Vec<_>>>()?;
            let store = model.store_mut();
            store.zero_grad();
            for (g, &i) in grads.iter().zip(batch) {
                loss_sum += g.loss;
                correct += usize::from(g.decision == train_y[i]);
                for (id, t) in &g.grads {
                    store.get_mut(*id).accumulate_grad(t)?;
                }
            }
            store.scale_grads(F::one() / F::from_usize(batch.len()));
            // Parameters the batch never reached still need a gradient entry.
            for p in store.iter_mut().filter(|p| p.requires_grad() && p.grad().is_none()) {
                let z = Tensor::zeros(p.value().shape());
                p.accumulate_grad(&z)?;
            }
            optimizer.step(store)?;
        }
        let eval = evaluate_prepared(model, &test_x, &test_y)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            train_accuracy: correct as f64 / train_x.len() as f64,
            test_loss: eval.loss,
            test_accuracy: eval.accuracy,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        if let Some(log) = sink.log.as_mut() {
            for r in record.split_records() {
                write_json_line(log, &r)?;
            }
        }
        if record.test_accuracy > best.0 {
            best = (record.test_accuracy, epoch);
            if let Some(path) = &sink.checkpoint {
                save_checkpoint(model.store(), path)?;
            }
        }
        confusion = eval.confusion;
        let perfect = record.train_accuracy >= 1.0;
        epochs.push(record);
        if cfg.stop_at_perfect_train && perfect {
            break;
        }
    }
    Ok(Metrics {
        epochs,
        best_test_accuracy: best.0,
        best_epoch: best.1,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        parameters: model.parameter_count(),
        confusion,
    })
}

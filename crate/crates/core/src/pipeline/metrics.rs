use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.correct() as f64 / n as f64
        }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.classes).map(|c| format!("pred_{c}")).collect();
        writeln!(out, "true,{}", header.join(","))?;
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn split_records(&self) -> [SplitRecord; 2] {
        [
            SplitRecord {
                epoch: self.epoch,
                split: "train",
                loss: self.train_loss,
                accuracy: self.train_accuracy,
            },
            SplitRecord {
                epoch: self.epoch,
                split: "test",
                loss: self.test_loss,
                accuracy: self.test_accuracy,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub epochs: usize,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub best_epoch: usize,
    pub wall_clock_seconds: f64,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    pub best_test_accuracy: f64,
    pub best_epoch: usize,
    pub wall_clock_seconds: f64,
    pub parameters: usize,
    /// Test-set confusion matrix after the last epoch.
    pub confusion: ConfusionMatrix,
}

impl Metrics {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn final_train_accuracy(&self) -> f64 {
        self.last().map_or(0.0, |e| e.train_accuracy)
    }

    pub fn final_test_accuracy(&self) -> f64 {
        self.last().map_or(0.0, |e| e.test_accuracy)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            epochs: self.epochs.len(),
            final_train_accuracy: self.final_train_accuracy(),
            final_test_accuracy: self.final_test_accuracy(),
            best_test_accuracy: self.best_test_accuracy,
            best_epoch: self.best_epoch,
            wall_clock_seconds: self.wall_clock_seconds,
            parameters: self.parameters,
        }
    }

    /// One JSON object per line: two split records per epoch, then
    /// `{"summary": ...}`.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for e in &self.epochs {
            for r in e.split_records() {
                write_json_line(out, &r)?;
            }
        }
        write_json_line(out, &serde_json::json!({ "summary": self.summary() }))
    }
}

pub fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::State(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::io("<metrics>", e))
}

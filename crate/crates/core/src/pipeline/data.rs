use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event::{gen_synthetic, load_stream, read_evs1, write_evs1, EventStream, StreamFormat, SyntheticSpec};

pub const MANIFEST: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "file,label";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stream: EventStream,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

/// Balanced moving-glyph dataset description.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub width: u16,
    pub height: u16,
    pub duration: u32,
    pub event_rate: f64,
    pub noise_rate: f64,
}

impl Default for SyntheticDataset {
    fn default() -> Self {
        SyntheticDataset {
            classes: SyntheticSpec::CLASSES,
            per_class: 50,
            seed: 0,
            width: 32,
            height: 32,
            duration: 1_000_000,
            event_rate: 10_000.0,
            noise_rate: 1_000.0,
        }
    }
}

impl SyntheticDataset {
    /// Samples are interleaved by class (`0, 1, .., C-1, 0, 1, ..`); each draws
    /// its own seed from the dataset seed.
    pub fn generate(&self) -> Result<Dataset> {
        if self.classes == 0 || self.classes > SyntheticSpec::CLASSES {
            return Err(Error::arg(format!(
                "synthetic data has 1..={} classes, got {}",
                SyntheticSpec::CLASSES,
                self.classes
            )));
        }
        if self.per_class == 0 {
            return Err(Error::arg("per_class must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let specs: Vec<SyntheticSpec> = (0..self.per_class * self.classes)
            .map(|i| SyntheticSpec {
                class_id: i % self.classes,
                seed: rng.gen(),
                width: self.width,
                height: self.height,
                duration: self.duration,
                event_rate: self.event_rate,
                noise_rate: self.noise_rate,
            })
            .collect();
        use rayon::prelude::*;
        let samples = specs
            .par_iter()
            .map(|s| {
                Ok(Sample {
                    stream: gen_synthetic(s)?,
                    label: s.class_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            samples,
            num_classes: self.classes,
        })
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Random split with `round(fraction * len)` training samples.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if self.samples.len() < 2 {
            return Err(Error::arg("need at least two samples to split"));
        }
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.samples.len() as f64 * fraction).round() as usize).clamp(1, self.samples.len() - 1);
        let pick = |idx: &[usize]| Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
        };
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }

    /// Writes `manifest.csv` plus one EVS1 file per sample.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("{MANIFEST_HEADER}\n");
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("sample_{i:05}.evs1");
            let path = dir.join(&name);
            let bytes = write_evs1(&s.stream).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            manifest.push_str(&format!("{name},{}\n", s.label));
        }
        let path = dir.join(MANIFEST);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    /// Reads a directory written by [`Dataset::save_dir`] or prepared by hand
    /// (`file,label` rows; files are EVS1, or CSV when `csv_geometry` is set).
    pub fn load_dir(dir: impl AsRef<Path>, csv_geometry: Option<(u16, u16, u32)>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
            return Err(Error::format_at_line(format!("expected header \"{MANIFEST_HEADER}\""), 1));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (file, label) = line
                .split_once(',')
                .ok_or_else(|| Error::format_at_line("expected file,label", lineno))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| Error::format_at_line(format!("invalid label \"{}\"", label.trim()), lineno))?;
            let fpath = dir.join(file.trim());
            let stream = match StreamFormat::from_path(&fpath, csv_geometry)? {
                StreamFormat::Evs1 => {
                    let bytes = fs::read(&fpath).map_err(|e| Error::io(&fpath, e))?;
                    read_evs1(&bytes)?
                }
                csv => load_stream(&fpath, csv)?,
            };
            samples.push(Sample { stream, label });
        }
        let num_classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
        Ok(Dataset { samples, num_classes })
    }
}

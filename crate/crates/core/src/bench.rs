//! Throughput of per-event stamping against count map plus strided readout.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evconv::{build_count_map, event_conv_reference, strided_readout, Kernel, ReadoutBank};
use crate::event::{Event, EventStream, Polarity};

pub const DEFAULT_RATES: [f64; 3] = [1e3, 1e5, 1e6];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub width: u16,
    pub height: u16,
    pub duration_us: u32,
    pub kernel_size: usize,
    /// Events per second.
    pub rates: Vec<f64>,
    /// Timings keep the fastest of this many runs.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            width: 128,
            height: 128,
            duration_us: 1_000_000,
            kernel_size: 3,
            rates: DEFAULT_RATES.to_vec(),
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvPath {
    EventByEvent,
    CountMap,
}

impl ConvPath {
    pub fn name(self) -> &'static str {
        match self {
            ConvPath::EventByEvent => "event_by_event",
            ConvPath::CountMap => "count_map",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub rate: f64,
    pub events: usize,
    pub path: ConvPath,
    pub seconds: f64,
    /// Largest difference to the other path's response.
    pub max_deviation: f64,
}

impl BenchRow {
    pub fn events_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.events as f64 / self.seconds
        } else {
            f64::INFINITY
        }
    }
}

fn uniform_stream(cfg: &BenchConfig, rate: f64, rng: &mut ChaCha8Rng) -> Result<EventStream> {
    let n = (rate * cfg.duration_us as f64 * 1e-6).round() as usize;
    let events = (0..n)
        .map(|_| {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            Event::new(
                rng.gen_range(0..cfg.duration_us),
                rng.gen_range(0..cfg.width),
                rng.gen_range(0..cfg.height),
                p,
            )
        })
        .collect();
    EventStream::from_unsorted(cfg.width, cfg.height, cfg.duration_us, events)
}

fn fastest<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let v = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one run")))
}

/// Two rows per rate, event-by-event first.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::arg(format!("event rates must be nonnegative, got {:?}", cfg.rates)));
    }
    if cfg.duration_us == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::arg("bench sensor and duration must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.kernel_size;
    let kernel = Kernel::from_fn(k, |_, _| rng.gen_range(-1.0f32..1.0))?;
    let bank = ReadoutBank::depthwise(&kernel, Polarity::COUNT);
    let (h, w) = (cfg.height as usize, cfg.width as usize);
    let mut rows = Vec::with_capacity(2 * cfg.rates.len());
    for &rate in &cfg.rates {
        let stream = uniform_stream(cfg, rate, &mut rng)?;
        let (t_ref, direct) = fastest(cfg.repeats, || Ok(event_conv_reference(&stream, &kernel)))?;
        let (t_map, read) = fastest(cfg.repeats, || {
            let cmap = build_count_map(&stream, k, h, w)?;
            strided_readout(&cmap, &bank)
        })?;
        let dev = direct.max_abs_diff(&read);
        for (path, seconds) in [(ConvPath::EventByEvent, t_ref), (ConvPath::CountMap, t_map)] {
            rows.push(BenchRow {
                rate,
                events: stream.len(),
                path,
                seconds,
                max_deviation: dev,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "event_rate,events,path,seconds,events_per_second,max_deviation";

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.9},{:.1},{:e}",
            r.rate,
            r.events,
            r.path.name(),
            r.seconds,
            r.events_per_second(),
            r.max_deviation
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_cover_both_paths_per_rate() {
        let cfg = BenchConfig {
            width: 16,
            height: 16,
            rates: vec![10.0, 1000.0],
            repeats: 1,
            ..Default::default()
        };
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].path, ConvPath::EventByEvent);
        assert_eq!(rows[1].path, ConvPath::CountMap);
        assert_eq!(rows[2].events, 1000);
        assert!(rows.iter().all(|r| r.max_deviation <= 1e-3));
        let mut csv = Vec::new();
        write_bench_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with(CSV_HEADER));
    }

    #[test]
    fn negative_rate_rejected() {
        let cfg = BenchConfig {
            rates: vec![-1.0],
            ..Default::default()
        };
        assert!(run_bench(&cfg).is_err());
    }
}

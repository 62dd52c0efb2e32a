//! The `evformer` command line.
//!
//! Exit codes: 0 on success, 1 when `verify` finds a failing case, 2 for
//! usage, configuration and I/O errors. `EVFORMER_THREADS` caps the worker
//! pool.

mod config_file;

pub use config_file::{data_section, model_section, run_file, train_section, DataConfig, RunConfig};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autograd::load_checkpoint_into;
use crate::bench::{run_bench, write_bench_csv, BenchConfig, DEFAULT_RATES};
use crate::error::{Error, Result};
use crate::event::{load_stream, save_stream, StreamFormat};
use crate::pipeline::{evaluate, train, train_split, Dataset, Metrics, Model, SyntheticDataset, TrainSink, Variant};
use crate::verify::{
    check_gabor, check_lif_examples, end_to_end_gradient, primitive_gradient_suite, random_graph_suite,
    run_equivalence, EquivalenceConfig, REAL_TOLERANCE,
};
use crate::evconv::GaborParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const THREADS_ENV: &str = "EVFORMER_THREADS";

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const RUN_FILE: &str = "run.ini";

#[derive(Debug, Parser)]
#[command(name = "evformer", version, about = "Event-camera convolution and spiking-transformer toolkit")]
pub struct Cli {
    /// Run file with [model], [train] and [data] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert one stream between CSV and EVS1, by file extension.
    Convert(ConvertArgs),
    /// Write a synthetic glyph dataset to a directory.
    Gen(GenArgs),
    /// Run the equivalence and gradient self-checks.
    Verify(VerifyArgs),
    /// Train a model and write metrics, confusion matrix and checkpoint.
    Train(TrainArgs),
    /// Evaluate a trained run, optionally on stream prefixes.
    Eval(EvalArgs),
    /// Time per-event stamping against count map plus readout.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Geometry {
    /// Sensor width for CSV input.
    #[arg(long)]
    pub width: Option<u16>,
    /// Sensor height for CSV input.
    #[arg(long)]
    pub height: Option<u16>,
    /// Stream duration for CSV input.
    #[arg(long = "duration-us")]
    pub duration_us: Option<u32>,
}

impl Geometry {
    fn get(&self) -> Option<(u16, u16, u32)> {
        Some((self.width?, self.height?, self.duration_us?))
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub geometry: Geometry,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long = "per-class")]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
    #[arg(long = "duration-us")]
    pub duration_us: Option<u32>,
    #[arg(long = "event-rate")]
    pub event_rate: Option<f64>,
    #[arg(long = "noise-rate")]
    pub noise_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long = "max-events", default_value_t = 5000)]
    pub max_events: usize,
    #[arg(long = "max-side", default_value_t = 64)]
    pub max_side: u16,
    /// Random primitive chains in the gradient suite.
    #[arg(long, default_value_t = 100)]
    pub chains: usize,
    /// Skip the full-model gradient check.
    #[arg(long = "skip-model")]
    pub skip_model: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory for metrics, confusion matrix, checkpoint and model config.
    #[arg(long)]
    pub out: PathBuf,
    /// Model and training preset instead of a run file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Dataset directory; synthetic data is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Separate test directory; otherwise the data is split.
    #[arg(long = "test-data")]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub geometry: Geometry,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset directory; otherwise the run's held-out samples are rebuilt.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also evaluate on prefixes of this length.
    #[arg(long = "time-length-us")]
    pub time_length_us: Option<u32>,
    #[command(flatten)]
    pub geometry: Geometry,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 128)]
    pub width: u16,
    #[arg(long, default_value_t = 128)]
    pub height: u16,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Reads `EVFORMER_THREADS` and sizes the global pool. Call once at start-up.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::arg(format!("{THREADS_ENV} must be a positive integer, got \"{v}\"")))?;
    // A pool that already exists keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn line(out: &mut dyn Write, text: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", text.as_ref()).map_err(io_err(Path::new("<stdout>")))
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Convert(a) => convert(a, out),
        Command::Gen(a) => gen(&run_config(cli)?, a, out),
        Command::Verify(a) => verify(a, out),
        Command::Train(a) => train_cmd(run_config(cli)?, a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

fn convert(a: &ConvertArgs, out: &mut dyn Write) -> Result<i32> {
    let geometry = a.geometry.get();
    let stream = load_stream(&a.input, StreamFormat::from_path(&a.input, geometry)?)?;
    let target = StreamFormat::from_path(
        &a.output,
        Some((stream.width(), stream.height(), stream.duration())),
    )?;
    save_stream(&stream, &a.output, target)?;
    line(out, format!("wrote {} events to {}", stream.len(), a.output.display()))?;
    Ok(EXIT_OK)
}

fn synthetic(base: &SyntheticDataset, a: &GenArgs) -> SyntheticDataset {
    SyntheticDataset {
        classes: a.classes.unwrap_or(base.classes),
        per_class: a.per_class.unwrap_or(base.per_class),
        seed: a.seed.unwrap_or(base.seed),
        width: a.width.unwrap_or(base.width),
        height: a.height.unwrap_or(base.height),
        duration: a.duration_us.unwrap_or(base.duration),
        event_rate: a.event_rate.unwrap_or(base.event_rate),
        noise_rate: a.noise_rate.unwrap_or(base.noise_rate),
    }
}

fn gen(cfg: &RunConfig, a: &GenArgs, out: &mut dyn Write) -> Result<i32> {
    let data = synthetic(&cfg.data.synthetic, a).generate()?;
    data.save_dir(&a.out)?;
    line(out, format!("wrote {} samples to {}", data.len(), a.out.display()))?;
    Ok(EXIT_OK)
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = EquivalenceConfig {
        trials: a.trials,
        seed: a.seed,
        max_events: a.max_events,
        max_side: a.max_side,
        ..Default::default()
    };
    let report = run_equivalence(&cfg)?;
    if let Some(f) = report.first_failure() {
        line(
            out,
            format!(
                "FAIL equivalence trial {} stream seed {} sensor {}x{} events {} kernel K={} {:?}: \
                 integer deviation {:e}, real deviation {:e}, counts {} vs footprint {}",
                f.trial,
                f.stream_seed,
                f.width,
                f.height,
                f.events,
                f.kernel_size,
                f.integer_kernel,
                f.integer_deviation,
                f.real_deviation,
                f.counted,
                f.footprint
            ),
        )?;
        return Ok(EXIT_VERIFY_FAILED);
    }
    line(
        out,
        format!(
            "equivalence: {} trials pass, integer kernels exact, max deviation {:e} (tolerance {:e})",
            report.outcomes.len(),
            report.max_real_deviation(),
            REAL_TOLERANCE
        ),
    )?;
    line(out, format!("count conservation: {} trials pass", report.outcomes.len()))?;

    let gabor = check_gabor(&GaborParams::default())?;
    if !gabor.passed() {
        line(out, format!("FAIL gabor: {gabor:?}"))?;
        return Ok(EXIT_VERIFY_FAILED);
    }
    line(
        out,
        format!("gabor: zero mean {:e}, unit norm {:e}", gabor.max_abs_sum, gabor.max_norm_error),
    )?;
    for c in check_lif_examples() {
        if !c.passed {
            line(out, format!("FAIL lif: {}", c.name))?;
            return Ok(EXIT_VERIFY_FAILED);
        }
    }
    line(out, "lif: unit dynamics pass")?;

    let mut cases = primitive_gradient_suite(a.seed)?;
    cases.extend(random_graph_suite(a.chains, a.seed)?);
    if !a.skip_model {
        cases.push(end_to_end_gradient(a.seed)?);
    }
    let mut worst = 0.0f64;
    for c in &cases {
        if !c.passed() {
            line(
                out,
                format!(
                    "FAIL gradient {}: relative error {:e} (tolerance {:e})",
                    c.name, c.report.max_rel_error, c.tolerance
                ),
            )?;
            return Ok(EXIT_VERIFY_FAILED);
        }
        worst = worst.max(c.report.max_rel_error);
    }
    line(out, format!("gradients: {} cases pass, max relative error {worst:e}", cases.len()))?;
    Ok(EXIT_OK)
}

fn load_data(dir: &Path, geometry: &Geometry, model: &crate::pipeline::ModelConfig) -> Result<Dataset> {
    let g = geometry.get().or_else(|| {
        geometry
            .duration_us
            .map(|d| (model.width as u16, model.height as u16, d))
    });
    Dataset::load_dir(dir, g)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn train_cmd(mut cfg: RunConfig, a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(p) = &a.preset {
        cfg.model = crate::pipeline::ModelConfig::preset(p)?;
        cfg.train = crate::pipeline::TrainConfig::preset(p)?;
    }
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
        cfg.model.seed = s;
    }
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
    if let Some(d) = &a.test_data {
        cfg.data.test_dir = Some(d.clone());
    }
    cfg.validate()?;

    let data = match &cfg.data.dir {
        Some(d) => load_data(d, &a.geometry, &cfg.model)?,
        None => SyntheticDataset {
            width: cfg.model.width as u16,
            height: cfg.model.height as u16,
            ..cfg.data.synthetic.clone()
        }
        .generate()?,
    };
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let mut model = Model::<f32>::new(cfg.model.clone())?;
    write_file(&a.out.join(RUN_FILE), run_file(&cfg).as_bytes())?;

    let metrics_path = a.out.join(METRICS_FILE);
    let mut log = Vec::new();
    let sink = TrainSink {
        checkpoint: Some(a.out.join(CHECKPOINT_FILE)),
        log: Some(&mut log),
    };
    let metrics: Metrics = match &cfg.data.test_dir {
        Some(t) => {
            let test = load_data(t, &a.geometry, &cfg.model)?;
            train(&mut model, &data, &test, &cfg.train, sink)?
        }
        None => train_split(&mut model, &data, &cfg.train, sink)?,
    };
    metrics.write_jsonl(&mut log)?;
    write_file(&metrics_path, &log)?;
    let mut csv = Vec::new();
    metrics.confusion.write_csv(&mut csv).map_err(io_err(Path::new(CONFUSION_FILE)))?;
    write_file(&a.out.join(CONFUSION_FILE), &csv)?;

    let s = metrics.summary();
    line(
        out,
        format!(
            "trained {} epochs: train accuracy {:.4}, test accuracy {:.4}, best {:.4} at epoch {}, {} parameters, {:.1} s",
            s.epochs,
            s.final_train_accuracy,
            s.final_test_accuracy,
            s.best_test_accuracy,
            s.best_epoch,
            s.parameters,
            s.wall_clock_seconds
        ),
    )?;
    Ok(EXIT_OK)
}

fn eval_cmd(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(a.run.join(RUN_FILE))?;
    let mut model = Model::<f32>::new(cfg.model.clone())?;
    load_checkpoint_into(model.store_mut(), a.run.join(CHECKPOINT_FILE))?;
    let data = match (&a.data, &cfg.data.test_dir) {
        (Some(d), _) | (None, Some(d)) => load_data(d, &a.geometry, &cfg.model)?,
        (None, None) => {
            let pooled = match &cfg.data.dir {
                Some(d) => load_data(d, &a.geometry, &cfg.model)?,
                None => SyntheticDataset {
                    width: cfg.model.width as u16,
                    height: cfg.model.height as u16,
                    ..cfg.data.synthetic.clone()
                }
                .generate()?,
            };
            pooled.split(cfg.train.train_fraction, cfg.train.seed)?.1
        }
    };
    let full = evaluate(&model, &data, None)?;
    line(out, format!("accuracy full {:.4} ({} samples)", full.accuracy, data.len()))?;
    if let Some(t) = a.time_length_us {
        let cut = evaluate(&model, &data, Some(t))?;
        line(out, format!("accuracy prefix {t} us {:.4} ({} samples)", cut.accuracy, data.len()))?;
    }
    Ok(EXIT_OK)
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = BenchConfig {
        width: a.width,
        height: a.height,
        rates: a.rates.clone().unwrap_or_else(|| DEFAULT_RATES.to_vec()),
        repeats: a.repeats,
        seed: a.seed,
        ..Default::default()
    };
    let rows = run_bench(&cfg)?;
    let mut csv = Vec::new();
    write_bench_csv(&rows, &mut csv).map_err(io_err(Path::new("<csv>")))?;
    match &a.out {
        Some(p) => {
            write_file(p, &csv)?;
            line(out, format!("wrote {} rows to {}", rows.len(), p.display()))?;
        }
        None => out.write_all(&csv).map_err(io_err(Path::new("<stdout>")))?,
    }
    Ok(EXIT_OK)
}

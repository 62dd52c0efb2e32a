//! Self-checks run by `evformer verify`.
//!
//! The equivalence suite compares the stride-`K` readout of random count maps
//! against direct per-event stamping and checks count conservation. The
//! gradient suites compare tape gradients with central finite differences:
//! one case per primitive, random chains of primitives, and the full smoke
//! model with relaxed spikes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autograd::{check_gradients, Conv2dSpec, GradCheckReport, Graph, NodeId, Tensor, GRAD_FLOOR};
use crate::error::{Error, Result};
use crate::evconv::{build_count_map, event_conv_reference, footprint_size, gabor_bank, strided_readout, GaborParams, Kernel, ReadoutBank};
use crate::event::{gen_synthetic, Event, EventStream, Polarity, SyntheticSpec};
use crate::pipeline::{Model, ModelConfig};
use crate::snn::{lif_scan, LifParams, SpikeMode};

/// Largest allowed deviation for random 32-bit kernels.
pub const REAL_TOLERANCE: f64 = 1e-3;
/// Relative error bound for single primitives and random chains.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
/// Relative error bound for the whole model.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_events: usize,
    pub max_side: u16,
    pub kernel_sizes: Vec<usize>,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            trials: 100,
            seed: 7,
            max_events: 5000,
            max_side: 64,
            kernel_sizes: vec![3, 5],
        }
    }
}

impl EquivalenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::arg("trials must be at least 1"));
        }
        if self.max_side == 0 {
            return Err(Error::arg("max_side must be at least 1"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::arg(format!("kernel sizes must be odd, got {:?}", self.kernel_sizes)));
        }
        Ok(())
    }
}

/// One randomized equivalence trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub stream_seed: u64,
    pub width: u16,
    pub height: u16,
    pub kernel_size: usize,
    pub events: usize,
    /// Integer kernel entries of the exact comparison.
    pub integer_kernel: Vec<f32>,
    pub integer_deviation: f64,
    pub real_deviation: f64,
    pub counted: u64,
    pub footprint: u64,
}

impl TrialOutcome {
    pub fn integer_exact(&self) -> bool {
        self.integer_deviation == 0.0
    }

    pub fn conserved(&self) -> bool {
        self.counted == self.footprint
    }

    pub fn passed(&self) -> bool {
        self.integer_exact() && self.real_deviation <= REAL_TOLERANCE && self.conserved()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub outcomes: Vec<TrialOutcome>,
}

impl EquivalenceReport {
    pub fn max_real_deviation(&self) -> f64 {
        self.outcomes.iter().map(|o| o.real_deviation).fold(0.0, f64::max)
    }

    pub fn max_integer_deviation(&self) -> f64 {
        self.outcomes.iter().map(|o| o.integer_deviation).fold(0.0, f64::max)
    }

    pub fn first_failure(&self) -> Option<&TrialOutcome> {
        self.outcomes.iter().find(|o| !o.passed())
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }
}

/// Seed of trial `trial` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng.gen()
}

/// Uniformly random stream of at most `max_events` events on a sensor of at
/// most `max_side` pixels per side, over one second.
pub fn random_stream(seed: u64, max_events: usize, max_side: u16) -> Result<EventStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(1..=max_side);
    let height = rng.gen_range(1..=max_side);
    let n = rng.gen_range(0..=max_events);
    let duration = 1_000_000u32;
    let events = (0..n)
        .map(|_| {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            Event::new(rng.gen_range(0..duration), rng.gen_range(0..width), rng.gen_range(0..height), p)
        })
        .collect();
    EventStream::from_unsorted(width, height, duration, events)
}

pub fn run_trial(cfg: &EquivalenceConfig, trial: usize) -> Result<TrialOutcome> {
    let stream_seed = trial_seed(cfg.seed, trial);
    let stream = random_stream(stream_seed, cfg.max_events, cfg.max_side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed ^ 0x5eed);
    let k = cfg.kernel_sizes[rng.gen_range(0..cfg.kernel_sizes.len())];
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let cmap = build_count_map(&stream, k, h, w)?;

    let int_kernel = Kernel::from_fn(k, |_, _| rng.gen_range(-3i32..=3) as f32)?;
    let real_kernel = Kernel::from_fn(k, |_, _| rng.gen_range(-1.0f32..1.0))?;
    let deviation = |kernel: &Kernel<f32>| -> Result<f64> {
        let direct = event_conv_reference(&stream, kernel);
        let read = strided_readout(&cmap, &ReadoutBank::depthwise(kernel, Polarity::COUNT))?;
        Ok(direct.max_abs_diff(&read))
    };

    let footprint = stream
        .events()
        .iter()
        .map(|e| footprint_size(e.x as usize, e.y as usize, k, w, h) as u64)
        .sum();
    Ok(TrialOutcome {
        trial,
        stream_seed,
        width: stream.width(),
        height: stream.height(),
        kernel_size: k,
        events: stream.len(),
        integer_kernel: int_kernel.values().to_vec(),
        integer_deviation: deviation(&int_kernel)?,
        real_deviation: deviation(&real_kernel)?,
        counted: cmap.total(),
        footprint,
    })
}

/// Runs all trials in parallel; outcomes are ordered by trial index.
pub fn run_equivalence(cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    cfg.validate()?;
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport { outcomes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborCheck {
    pub max_abs_sum: f64,
    pub max_norm_error: f64,
}

impl GaborCheck {
    pub fn passed(&self) -> bool {
        self.max_abs_sum <= 1e-6 && self.max_norm_error <= 1e-6
    }
}

pub fn check_gabor(params: &GaborParams) -> Result<GaborCheck> {
    let mut out = GaborCheck {
        max_abs_sum: 0.0,
        max_norm_error: 0.0,
    };
    for k in gabor_bank(params)? {
        let sum: f64 = k.values().iter().sum();
        let norm = k.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        out.max_abs_sum = out.max_abs_sum.max(sum.abs());
        out.max_norm_error = out.max_norm_error.max((norm - 1.0).abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCheck {
    pub name: &'static str,
    pub passed: bool,
}

/// Constant-current LIF cases with `tau = 2`, `v_threshold = 1`.
pub fn check_lif_examples() -> Vec<NamedCheck> {
    let p = LifParams::default();
    let t = 16;
    let run = |x: f64| lif_scan(&vec![x; t], t, &p, SpikeMode::Hard);
    let (zero_s, zero_h) = run(0.0);
    let (two_s, _) = run(2.0);
    let (one_s, one_h) = run(1.0);
    let one_closed = one_h
        .iter()
        .enumerate()
        .all(|(i, &v)| (v - (1.0 - 0.5f64.powi(i as i32 + 1))).abs() <= 1e-15);
    vec![
        NamedCheck {
            name: "zero input stays at rest",
            passed: zero_s.iter().all(|&s| s == 0.0) && zero_h.iter().all(|&v| v == p.v_reset),
        },
        NamedCheck {
            name: "input 2 spikes every step",
            passed: two_s.iter().all(|&s| s == 1.0),
        },
        NamedCheck {
            name: "input 1 never spikes",
            passed: one_s.iter().all(|&s| s == 0.0) && one_closed,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCase {
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < self.tolerance
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// `sum(out * C)` with a fixed pseudo-random `C`, so every output element
/// contributes with a distinct weight.
fn weighted_sum(g: &mut Graph<f64>, out: NodeId) -> Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let c = rand_tensor(&mut rng, g.shape(out), -1.0, 1.0);
    let c = g.constant(c);
    let y = g.mul(out, c)?;
    Ok(g.sum_all(y))
}

type CaseFn = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId> + Sync>;

fn case(name: &str, inputs: Vec<Tensor<f64>>, f: CaseFn) -> Result<GradCase> {
    Ok(GradCase {
        name: name.to_string(),
        report: check_gradients(&inputs, FD_STEP, f)?,
        tolerance: PRIMITIVE_TOLERANCE,
    })
}

/// One finite-difference check per primitive on random shapes of at most 64
/// elements.
pub fn primitive_gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let r = rng.gen_range(1..=4);
    let c = rng.gen_range(1..=4);
    let s2 = [r, c];
    let mut t = |shape: &[usize]| rand_tensor(&mut rng, shape, -1.0, 1.0);

    let (a, b) = (t(&s2), t(&s2));
    out.push(case("add", vec![a.clone(), b.clone()], Box::new(|g, x| {
        let y = g.add(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("sub", vec![a.clone(), b.clone()], Box::new(|g, x| {
        let y = g.sub(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("mul", vec![a.clone(), b.clone()], Box::new(|g, x| {
        let y = g.mul(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("scale", vec![a.clone()], Box::new(|g, x| {
        let y = g.scale(x[0], -1.7);
        weighted_sum(g, y)
    }))?);
    out.push(case("scale_by", vec![a.clone(), t(&[1])], Box::new(|g, x| {
        let y = g.scale_by(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("add_bias", vec![a.clone(), t(&[c])], Box::new(|g, x| {
        let y = g.add_bias(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("matmul", vec![t(&[2, r, 3]), t(&[2, 3, c])], Box::new(|g, x| {
        let y = g.matmul(x[0], x[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("conv2d", vec![t(&[1, 2, 5, 5]), t(&[2, 2, 3, 3]), t(&[2])], Box::new(|g, x| {
        let spec = Conv2dSpec { stride: 1, padding: 1, groups: 1 };
        let y = g.conv2d(x[0], x[1], Some(x[2]), spec)?;
        weighted_sum(g, y)
    }))?);
    out.push(case("conv2d_strided", vec![t(&[1, 2, 6, 6]), t(&[1, 2, 3, 3])], Box::new(|g, x| {
        let y = g.conv2d(x[0], x[1], None, Conv2dSpec::strided(3))?;
        weighted_sum(g, y)
    }))?);
    out.push(case("conv2d_grouped", vec![t(&[1, 2, 4, 4]), t(&[2, 1, 3, 3])], Box::new(|g, x| {
        let spec = Conv2dSpec { stride: 1, padding: 1, groups: 2 };
        let y = g.conv2d(x[0], x[1], None, spec)?;
        weighted_sum(g, y)
    }))?);
    out.push(case("reshape", vec![t(&[2, 3, 2])], Box::new(|g, x| {
        let y = g.reshape(x[0], &[3, 4])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("transpose", vec![t(&[2, 3, 4])], Box::new(|g, x| {
        let y = g.transpose(x[0], &[2, 0, 1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("sum", vec![t(&[2, 3, 4])], Box::new(|g, x| {
        let y = g.sum(x[0], &[0, 2])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("mean", vec![t(&[2, 3, 4])], Box::new(|g, x| {
        let y = g.mean(x[0], &[1])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("softmax", vec![t(&[3, 4])], Box::new(|g, x| {
        let y = g.softmax(x[0])?;
        weighted_sum(g, y)
    }))?);
    out.push(case("cross_entropy", vec![t(&[3, 4])], Box::new(|g, x| g.cross_entropy(x[0], &[0, 3, 1])))?);
    out.push(case("normalize", vec![t(&[5, 3]), t(&[3]), t(&[3])], Box::new(|g, x| {
        let y = g.normalize(x[0], x[1], x[2])?;
        weighted_sum(g, y)
    }))?);
    let lif_in = rand_tensor(&mut rng, &[6, 4], 0.0, 3.0);
    out.push(case("lif_relaxed", vec![lif_in], Box::new(|g, x| {
        let y = g.lif(x[0], &LifParams::default(), SpikeMode::Relaxed)?;
        weighted_sum(g, y)
    }))?);
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum ChainOp {
    Add,
    Sub,
    Mul,
    Scale(f64),
    Transpose,
    Matmul,
    Bias,
    Softmax,
    Lif,
}

const CHAIN_OPS: usize = 9;

fn chain_op(rng: &mut ChaCha8Rng) -> ChainOp {
    match rng.gen_range(0..CHAIN_OPS) {
        0 => ChainOp::Add,
        1 => ChainOp::Sub,
        2 => ChainOp::Mul,
        3 => ChainOp::Scale(rng.gen_range(-2.0..2.0)),
        4 => ChainOp::Transpose,
        5 => ChainOp::Matmul,
        6 => ChainOp::Bias,
        7 => ChainOp::Softmax,
        _ => ChainOp::Lif,
    }
}

/// Applies `ops` to input 0. Inputs are `[x [r,c], y [r,c], m_c [c,c],
/// m_r [r,r], b_c [c], b_r [r]]`; the operand that fits the current
/// orientation is used.
fn run_chain(g: &mut Graph<f64>, x: &[NodeId], ops: &[ChainOp]) -> Result<NodeId> {
    let mut h = x[0];
    let mut flipped = false;
    for &op in ops {
        let other = if flipped { g.transpose(x[1], &[1, 0])? } else { x[1] };
        h = match op {
            ChainOp::Add => g.add(h, other)?,
            ChainOp::Sub => g.sub(h, other)?,
            ChainOp::Mul => g.mul(h, other)?,
            ChainOp::Scale(s) => g.scale(h, s),
            ChainOp::Transpose => {
                flipped = !flipped;
                g.transpose(h, &[1, 0])?
            }
            ChainOp::Matmul => g.matmul(h, if flipped { x[3] } else { x[2] })?,
            ChainOp::Bias => g.add_bias(h, if flipped { x[5] } else { x[4] })?,
            ChainOp::Softmax => g.softmax(h)?,
            ChainOp::Lif => g.lif(h, &LifParams::default(), SpikeMode::Relaxed)?,
        };
    }
    weighted_sum(g, h)
}

/// Random five-op chains over matching shapes.
pub fn random_graph_suite(trials: usize, seed: u64) -> Result<Vec<GradCase>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let r = rng.gen_range(1..=5);
            let c = rng.gen_range(1..=5);
            let ops: Vec<ChainOp> = (0..5).map(|_| chain_op(&mut rng)).collect();
            let inputs = vec![
                rand_tensor(&mut rng, &[r, c], -1.0, 1.0),
                rand_tensor(&mut rng, &[r, c], -1.0, 1.0),
                rand_tensor(&mut rng, &[c, c], -1.0, 1.0),
                rand_tensor(&mut rng, &[r, r], -1.0, 1.0),
                rand_tensor(&mut rng, &[c], -1.0, 1.0),
                rand_tensor(&mut rng, &[r], -1.0, 1.0),
            ];
            let name = format!("chain {i} {r}x{c} {ops:?}");
            let report = check_gradients(&inputs, FD_STEP, |g, x| run_chain(g, x, &ops))?;
            Ok(GradCase {
                name,
                report,
                tolerance: PRIMITIVE_TOLERANCE,
            })
        })
        .collect()
}

/// Readout-kernel gradient of the smoke model in 64-bit with relaxed spikes,
/// against central differences of the loss on one synthetic sample.
pub fn end_to_end_gradient(seed: u64) -> Result<GradCase> {
    let cfg = ModelConfig {
        seed,
        ..ModelConfig::smoke()
    };
    let mut model = Model::<f64>::new(cfg.clone())?;
    model.set_spike_mode(SpikeMode::Relaxed);
    let stream = gen_synthetic(&SyntheticSpec {
        class_id: 0,
        seed,
        width: cfg.width as u16,
        height: cfg.height as u16,
        duration: 1_000_000,
        event_rate: 10_000.0,
        noise_rate: 1_000.0,
    })?;
    let input = model.prepare(&stream)?;
    let label = 1;
    let id = model
        .readout_param()
        .ok_or_else(|| Error::State("smoke model has no trainable readout".into()))?;
    let sg = model.sample_grad(&input, label)?;
    let analytic = sg
        .grads
        .iter()
        .find(|(p, _)| *p == id)
        .map(|(_, t)| t.data().to_vec())
        .ok_or_else(|| Error::State("readout received no gradient".into()))?;

    let n = analytic.len();
    let mut numeric = vec![0.0; n];
    for (j, slot) in numeric.iter_mut().enumerate() {
        let orig = model.store().get(id).value().data()[j];
        model.store_mut().get_mut(id).value_mut().data_mut()[j] = orig + FD_STEP;
        let up = model.sample_loss(&input, label)?.0;
        model.store_mut().get_mut(id).value_mut().data_mut()[j] = orig - FD_STEP;
        let down = model.sample_loss(&input, label)?.0;
        model.store_mut().get_mut(id).value_mut().data_mut()[j] = orig;
        *slot = (up - down) / (2.0 * FD_STEP);
    }
    let scale = analytic.iter().chain(&numeric).fold(GRAD_FLOOR, |m, v| m.max(v.abs()));
    let abs = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(GradCase {
        name: "smoke model readout kernel".into(),
        report: GradCheckReport {
            max_rel_error: abs / scale,
            max_abs_error: abs,
            checked: n,
        },
        tolerance: END_TO_END_TOLERANCE,
    })
}

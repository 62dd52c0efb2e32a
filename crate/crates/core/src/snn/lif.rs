use std::f64::consts::PI;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Membrane update, per step and neuron:
///
/// ```text
/// H[t] = V[t-1] + (X[t] - (V[t-1] - v_reset)) / tau
/// S[t] = step(H[t] - v_threshold)
/// V[t] = v_reset if S[t] else H[t]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub tau: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    /// Width parameter of the arctan surrogate.
    pub surrogate_alpha: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            tau: 2.0,
            v_threshold: 1.0,
            v_reset: 0.0,
            surrogate_alpha: 2.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.tau.is_nan() || self.tau < 1.0 {
            problems.push(format!("tau must be at least 1, got {}", self.tau));
        }
        if self.v_threshold.is_nan() || self.v_reset.is_nan() || self.v_threshold <= self.v_reset {
            problems.push(format!(
                "v_threshold {} must exceed v_reset {}",
                self.v_threshold, self.v_reset
            ));
        }
        if self.surrogate_alpha.is_nan() || self.surrogate_alpha <= 0.0 {
            problems.push(format!("surrogate_alpha must be positive, got {}", self.surrogate_alpha));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// How spikes are produced in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Heaviside spikes; backward uses the surrogate and detaches the reset.
    #[default]
    Hard,
    /// Spikes replaced by the smooth function whose derivative is the
    /// surrogate, with the reset kept in the graph. Backward is then the exact
    /// gradient of the forward, which is what finite differences check.
    Relaxed,
}

/// `d spike / du = alpha / (2 (1 + (pi alpha u / 2)^2))`, peak `alpha / 2` at `u = 0`.
#[inline]
pub fn surrogate_grad(u: f64, alpha: f64) -> f64 {
    let z = PI * alpha * u / 2.0;
    alpha / (2.0 * (1.0 + z * z))
}

/// `arctan(pi alpha u / 2) / pi + 1/2`, the antiderivative of [`surrogate_grad`].
#[inline]
pub fn relaxed_spike(u: f64, alpha: f64) -> f64 {
    (PI * alpha * u / 2.0).atan() / PI + 0.5
}

#[inline]
fn charge<F: Real>(v: F, x: F, inv_tau: F, v_reset: F) -> F {
    v + (x - (v - v_reset)) * inv_tau
}

/// Runs the membrane over a time-major sequence `[T, M]` starting from
/// `v_reset`. Returns `(spikes, h)` where `h` is the pre-reset potential.
pub fn lif_scan<F: Real>(input: &[F], t_steps: usize, params: &LifParams, mode: SpikeMode) -> (Vec<F>, Vec<F>) {
    assert!(t_steps > 0 && input.len().is_multiple_of(t_steps), "input not divisible into {t_steps} steps");
    let m = input.len() / t_steps;
    let inv_tau = F::from_f64(1.0 / params.tau);
    let v_reset = F::from_f64(params.v_reset);
    let v_th = F::from_f64(params.v_threshold);
    let mut v = vec![v_reset; m];
    let mut spikes = vec![F::zero(); input.len()];
    let mut h_all = vec![F::zero(); input.len()];
    for t in 0..t_steps {
        let base = t * m;
        for j in 0..m {
            let h = charge(v[j], input[base + j], inv_tau, v_reset);
            let s = match mode {
                SpikeMode::Hard => {
                    if h >= v_th {
                        F::one()
                    } else {
                        F::zero()
                    }
                }
                SpikeMode::Relaxed => {
                    F::from_f64(relaxed_spike((h - v_th).as_f64(), params.surrogate_alpha))
                }
            };
            h_all[base + j] = h;
            spikes[base + j] = s;
            v[j] = h * (F::one() - s) + v_reset * s;
        }
    }
    (spikes, h_all)
}

/// Backpropagation through time for [`lif_scan`].
pub fn lif_scan_backward<F: Real>(
    grad_out: &[F],
    h: &[F],
    spikes: &[F],
    t_steps: usize,
    params: &LifParams,
    mode: SpikeMode,
) -> Vec<F> {
    let m = grad_out.len() / t_steps;
    let inv_tau = F::from_f64(1.0 / params.tau);
    let keep = F::one() - inv_tau;
    let v_reset = F::from_f64(params.v_reset);
    let v_th = F::from_f64(params.v_threshold);
    let alpha = params.surrogate_alpha;
    let mut grad_in = vec![F::zero(); grad_out.len()];
    // Gradient with respect to the post-reset potential V[t].
    let mut dv = vec![F::zero(); m];
    for t in (0..t_steps).rev() {
        let base = t * m;
        for (j, dvj) in dv.iter_mut().enumerate() {
            let i = base + j;
            let s = spikes[i];
            let mut ds = grad_out[i];
            if mode == SpikeMode::Relaxed {
                ds += *dvj * (v_reset - h[i]);
            }
            let sg = F::from_f64(surrogate_grad((h[i] - v_th).as_f64(), alpha));
            let dh = ds * sg + *dvj * (F::one() - s);
            grad_in[i] = dh * inv_tau;
            *dvj = dh * keep;
        }
    }
    grad_in
}

/// Stateful LIF population for step-by-step simulation. Call
/// [`LifLayer::reset`] at the start of every sample.
#[derive(Debug, Clone)]
pub struct LifLayer<F> {
    params: LifParams,
    v: Option<Vec<F>>,
}

impl<F: Real> LifLayer<F> {
    pub fn new(params: LifParams) -> Result<Self> {
        params.validate()?;
        Ok(LifLayer { params, v: None })
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    /// Sets `neurons` membrane potentials to `v_reset`.
    pub fn reset(&mut self, neurons: usize) {
        self.v = Some(vec![F::from_f64(self.params.v_reset); neurons]);
    }

    pub fn membrane(&self) -> Option<&[F]> {
        self.v.as_deref()
    }

    pub fn step(&mut self, input: &[F]) -> Result<Vec<F>> {
        let v = self
            .v
            .as_mut()
            .ok_or_else(|| Error::State("LIF state not initialized; call reset first".into()))?;
        if v.len() != input.len() {
            return Err(Error::State(format!(
                "LIF state holds {} neurons, input has {}",
                v.len(),
                input.len()
            )));
        }
        let inv_tau = F::from_f64(1.0 / self.params.tau);
        let v_reset = F::from_f64(self.params.v_reset);
        let v_th = F::from_f64(self.params.v_threshold);
        Ok(v
            .iter_mut()
            .zip(input)
            .map(|(v, &x)| {
                let h = charge(*v, x, inv_tau, v_reset);
                if h >= v_th {
                    *v = v_reset;
                    F::one()
                } else {
                    *v = h;
                    F::zero()
                }
            })
            .collect())
    }

    /// Feeds a `[T, ...]` input one step at a time, continuing from the
    /// current state.
    pub fn forward(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let t_steps = *input
            .shape()
            .first()
            .ok_or_else(|| Error::arg("LIF input needs a leading time axis"))?;
        let m = input.len() / t_steps.max(1);
        let mut out = Vec::with_capacity(input.len());
        for t in 0..t_steps {
            out.extend(self.step(&input.data()[t * m..(t + 1) * m])?);
        }
        Tensor::new(input.shape(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let mut layer = LifLayer::<f64>::new(LifParams::default()).unwrap();
        layer.reset(1);
        let mut spikes = Vec::new();
        let mut vs = Vec::new();
        for _ in 0..steps {
            spikes.push(layer.step(&[x]).unwrap()[0]);
            vs.push(layer.membrane().unwrap()[0]);
        }
        (spikes, vs)
    }

    #[test]
    fn zero_input_is_silent() {
        let (s, v) = run(0.0, 10);
        assert!(s.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn input_two_spikes_every_step() {
        let (s, v) = run(2.0, 10);
        assert!(s.iter().all(|&x| x == 1.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn input_one_never_reaches_threshold() {
        let (s, v) = run(1.0, 40);
        assert!(s.iter().all(|&x| x == 0.0));
        for (t, &vt) in v.iter().enumerate() {
            let closed = 1.0 - 0.5f64.powi(t as i32 + 1);
            assert_eq!(vt, closed, "step {}", t + 1);
        }
    }

    #[test]
    fn uninitialized_state_is_an_error() {
        let mut layer = LifLayer::<f32>::new(LifParams::default()).unwrap();
        assert!(matches!(layer.step(&[1.0]), Err(Error::State(_))));
        layer.reset(2);
        assert!(matches!(layer.step(&[1.0]), Err(Error::State(_))));
    }

    #[test]
    fn reset_makes_runs_repeatable() {
        let input = Tensor::new(&[5, 3], (0..15).map(|i| (i % 4) as f32 * 0.7).collect()).unwrap();
        let mut layer = LifLayer::new(LifParams::default()).unwrap();
        layer.reset(3);
        let a = layer.forward(&input).unwrap();
        layer.reset(3);
        let b = layer.forward(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_matches_layer() {
        let input: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 * 0.6 - 0.5).collect();
        let (spikes, _) = lif_scan(&input, 6, &LifParams::default(), SpikeMode::Hard);
        let mut layer = LifLayer::new(LifParams::default()).unwrap();
        layer.reset(4);
        let t = layer.forward(&Tensor::new(&[6, 4], input).unwrap()).unwrap();
        assert_eq!(t.data(), &spikes[..]);
    }

    #[test]
    fn surrogate_shape() {
        assert_eq!(surrogate_grad(0.0, 2.0), 1.0);
        assert!(surrogate_grad(1e6, 2.0) < 1e-11);
        assert!(surrogate_grad(-1e6, 2.0) < 1e-11);
        assert!(surrogate_grad(0.3, 2.0) < 1.0);
        assert_eq!(relaxed_spike(0.0, 2.0), 0.5);
    }

    #[test]
    fn params_validation() {
        let bad = LifParams {
            tau: 0.5,
            v_threshold: 0.0,
            ..LifParams::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(p)) if p.len() == 2));
    }
}

use rand::Rng;

use crate::autograd::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::Result;
use crate::real::Real;
use crate::snn::{LifParams, SpikeMode};

/// Per-forward settings plus a record of notable intermediate nodes.
#[derive(Debug, Clone)]
pub struct SpikeCtx {
    pub lif: LifParams,
    pub mode: SpikeMode,
    pub probe: Probe,
}

impl SpikeCtx {
    pub fn new(lif: LifParams, mode: SpikeMode) -> Self {
        SpikeCtx {
            lif,
            mode,
            probe: Probe::default(),
        }
    }

    /// LIF over a time-major node, recorded in the probe.
    pub fn lif<F: Real>(&mut self, g: &mut Graph<F>, x: NodeId) -> Result<NodeId> {
        let s = g.lif(x, &self.lif, self.mode)?;
        self.probe.lif.push(s);
        Ok(s)
    }
}

/// Node ids captured during a forward pass, for invariant checks.
#[derive(Debug, Clone, Default)]
pub struct Probe {
    /// Every LIF output.
    pub lif: Vec<NodeId>,
    /// Patch spikes plus positional spikes.
    pub pos_sums: Vec<NodeId>,
    /// Scaled attention products before their LIF, `[T*heads, N, dh]`.
    pub attn_products: Vec<NodeId>,
    /// Residual sums after each encoder sub-block.
    pub residuals: Vec<NodeId>,
}

pub(crate) fn uniform<F: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::from_f64(rng.gen_range(-bound..=bound)))
}

/// Fan-in scaled uniform initialization bound.
pub(crate) fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Per-column standardization with a learnable affine map.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, dim: usize, gain: f64) -> Self {
        Norm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[dim], F::from_f64(gain))),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[dim])),
        }
    }

    /// `x` is `[R, C]` with `C == dim`.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.normalize(x, gamma, beta)
    }
}

/// `y = x W (+ b)` on `[R, in]` rows. The bias is omitted when a [`Norm`]
/// follows, whose shift plays the same role.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Self {
        let w = uniform(rng, &[in_dim, out_dim], init_bound(in_dim));
        Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]))),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Linear map, optional normalization, then LIF: `[T*N, in] -> [T, N, out]`.
#[derive(Debug, Clone, Copy)]
pub struct SpikingLinear {
    pub linear: Linear,
    pub norm: Option<Norm>,
}

impl SpikingLinear {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        norm: Option<f64>,
    ) -> Self {
        let linear = Linear::new(store, rng, name, in_dim, out_dim, norm.is_none());
        let norm = norm.map(|gain| Norm::new(store, &format!("{name}.norm"), out_dim, gain));
        SpikingLinear { linear, norm }
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
        t_steps: usize,
    ) -> Result<NodeId> {
        let y = self.linear.forward(g, store, x)?;
        let y = match &self.norm {
            Some(n) => n.forward(g, store, y)?,
            None => y,
        };
        let rows = g.shape(y)[0];
        let y = g.reshape(y, &[t_steps, rows / t_steps, self.linear.out_dim])?;
        ctx.lif(g, y)
    }
}

use rand::Rng;

use super::layers::{Linear, SpikeCtx};
use crate::autograd::{Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

/// Average over patches, fully connected `D -> C` per step, LIF, then the
/// firing rate of each class neuron over the `T` steps.
///
/// With `class_gain` set, the currents of each step are standardized across
/// classes and scaled by the gain before the LIF.
#[derive(Debug, Clone)]
pub struct ClassifyHead {
    pub fc: Linear,
    pub num_classes: usize,
    pub class_gain: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOut {
    /// `[T, C]` class-neuron spikes.
    pub spikes: NodeId,
    /// `[C]` rates in `[0, 1]`.
    pub rates: NodeId,
}

impl ClassifyHead {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        num_classes: usize,
        class_gain: Option<f64>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::arg(format!("need at least 2 classes, got {num_classes}")));
        }
        Ok(ClassifyHead {
            fc: Linear::new(store, rng, name, in_dim, num_classes, true),
            num_classes,
            class_gain,
        })
    }

    /// `features` is `[T, N, D]`.
    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        features: NodeId,
    ) -> Result<HeadOut> {
        let pooled = g.mean(features, &[1])?;
        self.forward_pooled(g, store, ctx, pooled)
    }

    /// `pooled` is `[T, D]`.
    pub fn forward_pooled<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        pooled: NodeId,
    ) -> Result<HeadOut> {
        let mut currents = self.fc.forward(g, store, pooled)?;
        if let Some(gain) = self.class_gain {
            let t = g.shape(currents)[0];
            let by_class = g.transpose(currents, &[1, 0])?;
            let gamma = g.constant(Tensor::full(&[t], F::from_f64(gain)));
            let beta = g.constant(Tensor::zeros(&[t]));
            let z = g.normalize(by_class, gamma, beta)?;
            currents = g.transpose(z, &[1, 0])?;
        }
        let spikes = ctx.lif(g, currents)?;
        let rates = g.mean(spikes, &[0])?;
        Ok(HeadOut { spikes, rates })
    }
}

/// `rate_c = (1/T) sum_t spikes[t, c]` for a `[T, C]` spike train.
pub fn firing_rates<F: Real>(spikes: &Tensor<F>) -> Result<Vec<F>> {
    let s = spikes.shape();
    if s.len() != 2 || s[0] == 0 {
        return Err(Error::arg(format!("firing_rates expects [T, C], got {s:?}")));
    }
    let (t, c) = (s[0], s[1]);
    let mut rates = vec![F::zero(); c];
    for row in spikes.data().chunks_exact(c) {
        for (r, &v) in rates.iter_mut().zip(row) {
            *r += v;
        }
    }
    let tf = F::from_usize(t);
    rates.iter_mut().for_each(|r| *r /= tf);
    Ok(rates)
}

/// Index of the largest rate; ties go to the lowest index.
pub fn decide<F: Real>(rates: &[F]) -> usize {
    let mut best = 0;
    for (i, &r) in rates.iter().enumerate().skip(1) {
        if r > rates[best] {
            best = i;
        }
    }
    best
}

use rand::Rng;

use super::layers::{SpikeCtx, SpikingLinear};
use crate::autograd::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::real::Real;

pub const DEFAULT_SCALE: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsaConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub scale: f64,
}

impl SsaConfig {
    pub fn new(embed_dim: usize, heads: usize) -> Self {
        SsaConfig {
            embed_dim,
            heads,
            scale: DEFAULT_SCALE,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads.max(1)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.heads == 0 || self.embed_dim == 0 {
            p.push("embed_dim and heads must be positive".to_string());
        } else if !self.embed_dim.is_multiple_of(self.heads) {
            p.push(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            p.push(format!("attention scale must be positive, got {}", self.scale));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(p.join("; ")))
        }
    }
}

/// `(Q K^T) V * scale` on `[B, N, dh]` operands. No softmax.
pub fn attention_product<F: Real>(g: &mut Graph<F>, q: NodeId, k: NodeId, v: NodeId, scale: f64) -> Result<NodeId> {
    let kt = g.transpose_last(k)?;
    let qk = g.matmul(q, kt)?;
    let out = g.matmul(qk, v)?;
    Ok(g.scale(out, F::from_f64(scale)))
}

/// Spiking self-attention: spiking Q/K/V projections, per-head spike
/// products, LIF, then a spiking output projection.
#[derive(Debug, Clone)]
pub struct SpikingSelfAttention {
    pub cfg: SsaConfig,
    pub q: SpikingLinear,
    pub k: SpikingLinear,
    pub v: SpikingLinear,
    pub proj: SpikingLinear,
}

impl SpikingSelfAttention {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        cfg: SsaConfig,
        norm: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let mut lin = |part: &str| SpikingLinear::new(store, rng, &format!("{name}.{part}"), d, d, norm);
        Ok(SpikingSelfAttention {
            cfg,
            q: lin("q"),
            k: lin("k"),
            v: lin("v"),
            proj: lin("proj"),
        })
    }

    /// `[T, N, D]` to binary `[T, N, D]`.
    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
    ) -> Result<NodeId> {
        let s = g.shape(x).to_vec();
        let d = self.cfg.embed_dim;
        if s.len() != 3 || s[2] != d {
            return Err(Error::Shape {
                op: "self_attention",
                lhs: s,
                rhs: vec![d],
            });
        }
        let (t, n) = (s[0], s[1]);
        let (h, dh) = (self.cfg.heads, self.cfg.head_dim());
        let flat = g.reshape(x, &[t * n, d])?;

        let mut split = |g: &mut Graph<F>, lin: &SpikingLinear| -> Result<NodeId> {
            let y = lin.forward(g, store, ctx, flat, t)?;
            let y = g.reshape(y, &[t, n, h, dh])?;
            let y = g.transpose(y, &[0, 2, 1, 3])?;
            g.reshape(y, &[t * h, n, dh])
        };
        let q = split(g, &self.q)?;
        let k = split(g, &self.k)?;
        let v = split(g, &self.v)?;

        let a = attention_product(g, q, k, v, self.cfg.scale)?;
        ctx.probe.attn_products.push(a);
        let a = g.reshape(a, &[t, h, n, dh])?;
        let a = ctx.lif(g, a)?;
        let a = g.transpose(a, &[0, 2, 1, 3])?;
        let a = g.reshape(a, &[t * n, d])?;
        self.proj.forward(g, store, ctx, a, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use crate::snn::{LifParams, SpikeMode};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn product(q: Tensor<f64>, k: Tensor<f64>, v: Tensor<f64>, scale: f64) -> Tensor<f64> {
        let mut g = Graph::new();
        let (q, k, v) = (g.constant(q), g.constant(k), g.constant(v));
        let a = attention_product(&mut g, q, k, v, scale).unwrap();
        g.value(a).clone()
    }

    #[test]
    fn identity_hand_case() {
        let eye = Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = product(eye.clone(), eye.clone(), eye.clone(), 1.0);
        assert_eq!(a, eye);
    }

    #[test]
    fn zero_values_annihilate() {
        let q = Tensor::full(&[2, 3, 2], 1.0);
        let v = Tensor::zeros(&[2, 3, 2]);
        let a = product(q.clone(), q, v, 1.0);
        assert!(a.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn heads_must_divide_dim() {
        assert!(SsaConfig::new(10, 3).validate().is_err());
        assert!(SsaConfig::new(12, 3).validate().is_ok());
    }

    #[test]
    fn output_binary_and_shaped() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ssa = SpikingSelfAttention::new(&mut store, &mut rng, "ssa", SsaConfig::new(8, 2), Some(2.0)).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[3, 4, 8], |i| ((i * 5) % 3) as f32));
        let mut ctx = SpikeCtx::new(LifParams::default(), SpikeMode::Hard);
        let y = ssa.forward(&mut g, &store, &mut ctx, x).unwrap();
        assert_eq!(g.shape(y), &[3, 4, 8]);
        for &s in &ctx.probe.lif {
            assert!(g.value(s).data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
        assert_eq!(ctx.probe.lif.len(), 5);
    }

    fn binary(shape: [usize; 3]) -> impl Strategy<Value = Tensor<f64>> {
        let n = shape.iter().product::<usize>();
        proptest::collection::vec(0u8..=1, n)
            .prop_map(move |b| Tensor::new(&shape, b.into_iter().map(f64::from).collect()).unwrap())
    }

    proptest! {
        // Brute-force triple loop as the oracle; entries are integers in 0..=N*dh.
        #[test]
        fn binary_products_are_bounded_integers(
            (n, dh, q, k, v) in (1usize..=4, 1usize..=4).prop_flat_map(|(n, dh)| {
                (Just(n), Just(dh), binary([1, n, dh]), binary([1, n, dh]), binary([1, n, dh]))
            })
        ) {
            let a = product(q.clone(), k.clone(), v.clone(), 1.0);
            for i in 0..n {
                for c in 0..dh {
                    let mut want = 0.0;
                    for j in 0..n {
                        let qk: f64 = (0..dh).map(|e| q.data()[i * dh + e] * k.data()[j * dh + e]).sum();
                        want += qk * v.data()[j * dh + c];
                    }
                    let got = a.data()[i * dh + c];
                    prop_assert_eq!(got, want);
                    prop_assert!(got >= 0.0 && got.fract() == 0.0 && got <= (n * dh) as f64);
                }
            }
        }
    }
}

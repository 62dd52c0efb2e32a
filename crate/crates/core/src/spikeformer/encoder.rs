use rand::Rng;

use super::attention::{SpikingSelfAttention, SsaConfig};
use super::layers::{SpikeCtx, SpikingLinear};
use crate::autograd::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub num_blocks: usize,
    pub mlp_ratio: usize,
    pub ssa: SsaConfig,
}

impl EncoderConfig {
    pub fn new(num_blocks: usize, embed_dim: usize, heads: usize) -> Self {
        EncoderConfig {
            num_blocks,
            mlp_ratio: 4,
            ssa: SsaConfig::new(embed_dim, heads),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = self.ssa.problems();
        if self.num_blocks == 0 {
            p.push("num_blocks must be at least 1".to_string());
        }
        if self.mlp_ratio == 0 {
            p.push("mlp_ratio must be at least 1".to_string());
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

/// `D -> ratio*D -> D`, each linear followed by LIF.
#[derive(Debug, Clone)]
pub struct SpikingMlp {
    pub up: SpikingLinear,
    pub down: SpikingLinear,
}

impl SpikingMlp {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        dim: usize,
        ratio: usize,
        norm: Option<f64>,
    ) -> Self {
        SpikingMlp {
            up: SpikingLinear::new(store, rng, &format!("{name}.fc1"), dim, dim * ratio, norm),
            down: SpikingLinear::new(store, rng, &format!("{name}.fc2"), dim * ratio, dim, norm),
        }
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
    ) -> Result<NodeId> {
        let s = g.shape(x).to_vec();
        let (t, n, d) = (s[0], s[1], s[2]);
        let flat = g.reshape(x, &[t * n, d])?;
        let h = self.up.forward(g, store, ctx, flat, t)?;
        let h = g.reshape(h, &[t * n, self.up.linear.out_dim])?;
        self.down.forward(g, store, ctx, h, t)
    }
}

/// Self-attention and MLP, each with a residual connection. Residual sums
/// are passed on as they are.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn: SpikingSelfAttention,
    pub mlp: SpikingMlp,
}

impl EncoderBlock {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        index: usize,
        cfg: &EncoderConfig,
        norm: Option<f64>,
    ) -> Result<Self> {
        let name = format!("block{index}");
        Ok(EncoderBlock {
            attn: SpikingSelfAttention::new(store, rng, &format!("{name}.attn"), cfg.ssa, norm)?,
            mlp: SpikingMlp::new(store, rng, &format!("{name}.mlp"), cfg.ssa.embed_dim, cfg.mlp_ratio, norm),
        })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
    ) -> Result<NodeId> {
        let a = self.attn.forward(g, store, ctx, x)?;
        let x = g.add(x, a)?;
        ctx.probe.residuals.push(x);
        let m = self.mlp.forward(g, store, ctx, x)?;
        let x = g.add(x, m)?;
        ctx.probe.residuals.push(x);
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub blocks: Vec<EncoderBlock>,
}

impl Encoder {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        cfg: EncoderConfig,
        norm: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let blocks = (0..cfg.num_blocks)
            .map(|i| EncoderBlock::new(store, rng, i, &cfg, norm))
            .collect::<Result<_>>()?;
        Ok(Encoder { cfg, blocks })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        mut x: NodeId,
    ) -> Result<NodeId> {
        for b in &self.blocks {
            x = b.forward(g, store, ctx, x)?;
        }
        Ok(x)
    }
}

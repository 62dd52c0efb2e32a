//! Spiking transformer: patch embedding, conditional positional embedding,
//! spiking self-attention encoder blocks and a firing-rate head.
//!
//! All spiking tensors are time-major `[T, N, D]`. Every LIF output is binary;
//! the positional sum `x + x_pe` and the residual sums are small integers and
//! are fed onward unclipped.

mod attention;
mod embed;
mod encoder;
mod head;
mod layers;

pub use attention::{attention_product, SpikingSelfAttention, SsaConfig, DEFAULT_SCALE};
pub use embed::{square_grid, PatchEmbed, PatchEmbedConfig, PosEmbed, PosEmbedOut};
pub use encoder::{Encoder, EncoderBlock, EncoderConfig, SpikingMlp};
pub use head::{decide, firing_rates, ClassifyHead, HeadOut};
pub use layers::{Linear, Norm, Probe, SpikeCtx, SpikingLinear};

use rand::Rng;

use crate::autograd::{Graph, NodeId, ParamStore};
use crate::error::Result;
use crate::real::Real;

/// Full backbone from `[T, C, H, W]` maps to class rates.
#[derive(Debug, Clone)]
pub struct Spikformer {
    pub patch: PatchEmbed,
    pub pos: PosEmbed,
    pub encoder: Encoder,
    pub head: ClassifyHead,
}

impl Spikformer {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        patch: PatchEmbedConfig,
        encoder: EncoderConfig,
        num_classes: usize,
        norm: Option<f64>,
    ) -> Result<Self> {
        let pe = PatchEmbed::new(store, rng, patch, norm)?;
        let pos = PosEmbed::new(store, rng, patch.num_patches(), patch.embed_dim, norm)?;
        let enc = Encoder::new(store, rng, encoder, norm)?;
        let head = ClassifyHead::new(store, rng, "head", patch.embed_dim, num_classes, norm)?;
        Ok(Spikformer {
            patch: pe,
            pos,
            encoder: enc,
            head,
        })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        maps: NodeId,
    ) -> Result<HeadOut> {
        let x = self.patch.forward(g, store, ctx, maps)?;
        let x = self.pos.forward(g, store, ctx, x)?.x_o;
        let x = self.encoder.forward(g, store, ctx, x)?;
        self.head.forward(g, store, ctx, x)
    }
}

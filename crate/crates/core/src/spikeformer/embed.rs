use rand::Rng;

use super::layers::{init_bound, uniform, Norm, SpikeCtx};
use crate::autograd::{Conv2dSpec, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchEmbedConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
}

impl PatchEmbedConfig {
    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch_size, self.width / self.patch_size)
    }

    pub fn num_patches(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.patch_size == 0 {
            p.push("patch_size must be positive".to_string());
            return p;
        }
        if !self.height.is_multiple_of(self.patch_size) || !self.width.is_multiple_of(self.patch_size) {
            p.push(format!(
                "input {}x{} is not divisible by patch_size {}",
                self.height, self.width, self.patch_size
            ));
        }
        if self.height < self.patch_size || self.width < self.patch_size {
            p.push(format!("input {}x{} is smaller than one patch", self.height, self.width));
        }
        if self.in_channels == 0 || self.embed_dim == 0 {
            p.push("in_channels and embed_dim must be positive".to_string());
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

/// Conv with kernel = stride = patch size, then LIF.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub cfg: PatchEmbedConfig,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub norm: Option<Norm>,
}

impl PatchEmbed {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        cfg: PatchEmbedConfig,
        norm: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.patch_size;
        let fan_in = cfg.in_channels * p * p;
        let w = uniform(rng, &[cfg.embed_dim, cfg.in_channels, p, p], init_bound(fan_in));
        Ok(PatchEmbed {
            cfg,
            weight: store.add("patch.weight", w),
            bias: (norm.is_none()).then(|| store.add("patch.bias", Tensor::zeros(&[cfg.embed_dim]))),
            norm: norm.map(|gain| Norm::new(store, "patch.norm", cfg.embed_dim, gain)),
        })
    }

    /// `[T, C, H, W]` maps to binary `[T, N, D]` spikes.
    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
    ) -> Result<NodeId> {
        let s = g.shape(x).to_vec();
        let c = &self.cfg;
        if s.len() != 4 || s[1..] != [c.in_channels, c.height, c.width] {
            return Err(Error::Shape {
                op: "patch_embed",
                lhs: s,
                rhs: vec![c.in_channels, c.height, c.width],
            });
        }
        let t = s[0];
        let (n, d) = (c.num_patches(), c.embed_dim);
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        let y = g.conv2d(x, w, b, Conv2dSpec::strided(c.patch_size))?;
        let y = g.reshape(y, &[t, d, n])?;
        let y = g.transpose(y, &[0, 2, 1])?;
        let y = match &self.norm {
            Some(norm) => {
                let flat = g.reshape(y, &[t * n, d])?;
                let z = norm.forward(g, store, flat)?;
                g.reshape(z, &[t, n, d])?
            }
            None => y,
        };
        ctx.lif(g, y)
    }
}

/// Depthwise 3x3 convolution over the patch grid, then LIF, added back onto
/// its input without re-binarizing.
#[derive(Debug, Clone)]
pub struct PosEmbed {
    pub grid: (usize, usize),
    pub dim: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub norm: Option<Norm>,
}

/// Output of [`PosEmbed::forward`].
#[derive(Debug, Clone, Copy)]
pub struct PosEmbedOut {
    pub x_pe: NodeId,
    pub x_o: NodeId,
}

/// Side of a square patch grid holding `n` patches.
pub fn square_grid(n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || n == 0 {
        return Err(Error::arg(format!("{n} patches do not form a square grid")));
    }
    Ok(side)
}

impl PosEmbed {
    /// The grid is `sqrt(N) x sqrt(N)`; a non-square `N` is rejected.
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        num_patches: usize,
        dim: usize,
        norm: Option<f64>,
    ) -> Result<Self> {
        let side = square_grid(num_patches)?;
        let w = uniform(rng, &[dim, 1, 3, 3], init_bound(9));
        Ok(PosEmbed {
            grid: (side, side),
            dim,
            weight: store.add("pos.weight", w),
            bias: (norm.is_none()).then(|| store.add("pos.bias", Tensor::zeros(&[dim]))),
            norm: norm.map(|gain| Norm::new(store, "pos.norm", dim, gain)),
        })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        ctx: &mut SpikeCtx,
        x: NodeId,
    ) -> Result<PosEmbedOut> {
        let s = g.shape(x).to_vec();
        let (gh, gw) = self.grid;
        let (n, d) = (gh * gw, self.dim);
        if s.len() != 3 || s[1..] != [n, d] {
            return Err(Error::Shape {
                op: "pos_embed",
                lhs: s,
                rhs: vec![n, d],
            });
        }
        let t = s[0];
        let y = g.transpose(x, &[0, 2, 1])?;
        let y = g.reshape(y, &[t, d, gh, gw])?;
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        let spec = Conv2dSpec {
            stride: 1,
            padding: 1,
            groups: d,
        };
        let y = g.conv2d(y, w, b, spec)?;
        let y = g.reshape(y, &[t, d, n])?;
        let y = g.transpose(y, &[0, 2, 1])?;
        let y = match &self.norm {
            Some(norm) => {
                let flat = g.reshape(y, &[t * n, d])?;
                let z = norm.forward(g, store, flat)?;
                g.reshape(z, &[t, n, d])?
            }
            None => y,
        };
        let x_pe = ctx.lif(g, y)?;
        let x_o = g.add(x, x_pe)?;
        ctx.probe.pos_sums.push(x_o);
        Ok(PosEmbedOut { x_pe, x_o })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{LifParams, SpikeMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> SpikeCtx {
        SpikeCtx::new(LifParams::default(), SpikeMode::Hard)
    }

    fn cfg() -> PatchEmbedConfig {
        PatchEmbedConfig {
            in_channels: 2,
            height: 12,
            width: 12,
            patch_size: 3,
            embed_dim: 8,
        }
    }

    #[test]
    fn patch_shape_and_zero_input() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for norm in [None, Some(2.0)] {
            let pe = PatchEmbed::new(&mut store, &mut rng, cfg(), norm).unwrap();
            let mut g = Graph::new();
            let x = g.constant(Tensor::zeros(&[4, 2, 12, 12]));
            let s = pe.forward(&mut g, &store, &mut ctx(), x).unwrap();
            assert_eq!(g.shape(s), &[4, 16, 8]);
            assert!(g.value(s).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn patch_output_binary_under_scaling() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pe = PatchEmbed::new(&mut store, &mut rng, cfg(), None).unwrap();
        let base = uniform::<f32, _>(&mut rng, &[4, 2, 12, 12], 1.0);
        for scale in [1.0f32, 10.0] {
            let mut g = Graph::new();
            let x = g.constant(base.map(|v| v * scale));
            let s = pe.forward(&mut g, &store, &mut ctx(), x).unwrap();
            assert!(g.value(s).data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let bad = PatchEmbedConfig { height: 13, ..cfg() };
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
        assert!(square_grid(12).is_err());
        assert_eq!(square_grid(16).unwrap(), 4);
    }

    #[test]
    fn pos_embed_zero_and_bound() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = PosEmbed::new(&mut store, &mut rng, 16, 4, None).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 16, 4]));
        let out = pos.forward(&mut g, &store, &mut ctx(), x).unwrap();
        assert!(g.value(out.x_o).data().iter().all(|&v| v == 0.0));

        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[2, 16, 4], |i| ((i * 7) % 3 == 0) as u8 as f32));
        let out = pos.forward(&mut g, &store, &mut ctx(), x).unwrap();
        let peak = g.value(out.x_o).data().iter().fold(0.0f32, |m, &v| m.max(v));
        assert!(peak <= 2.0);
        assert!(PosEmbed::new(&mut store, &mut rng, 12, 4, None).is_err());
    }

    // A one-hot patch activation moved by one grid cell moves the positional
    // response by one cell.
    #[test]
    fn pos_embed_is_translation_equivariant() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = PosEmbed::new(&mut store, &mut rng, 36, 1, None).unwrap();
        // Threshold low enough that any positive drive fires.
        let lif = LifParams {
            v_threshold: 1e-9,
            ..LifParams::default()
        };
        let w = store.get(pos.weight).value().data().to_vec();
        let response = |cell: usize| {
            let mut g = Graph::new();
            let x = g.constant(Tensor::from_fn(&[1, 36, 1], |i| (i == cell) as u8 as f64));
            let mut c = SpikeCtx::new(lif, SpikeMode::Hard);
            let out = pos.forward(&mut g, &store, &mut c, x).unwrap();
            g.value(out.x_pe).data().to_vec()
        };
        let a = response(2 * 6 + 2);
        let b = response(2 * 6 + 3);
        for r in 1..5 {
            for c in 1..4 {
                assert_eq!(a[r * 6 + c], b[r * 6 + c + 1], "cell ({r},{c})");
            }
        }
        // The response is the flipped kernel's sign pattern around the hot cell.
        for dr in 0..3 {
            for dc in 0..3 {
                let cell = (1 + dr) * 6 + (1 + dc);
                let expect = (w[(2 - dr) * 3 + (2 - dc)] > 0.0) as u8 as f64;
                assert_eq!(a[cell], expect);
            }
        }
    }
}

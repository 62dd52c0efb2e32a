use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Backbone, ModelConfig, Variant, GABOR_CHANNELS};
use crate::autograd::{Conv2dSpec, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::evconv::{build_count_map, gabor_bank, GaborParams, ReadoutBank};
use crate::event::{bin_events, EventStream};
use crate::real::Real;
use crate::snn::SpikeMode;
use crate::spikeformer::{decide, ClassifyHead, Probe, SpikeCtx, Spikformer};

#[derive(Debug, Clone)]
enum FrontEnd {
    /// Stride-`K` readout of the count maps, weights `[C_out, 2, K, K]`.
    Readout(ParamId),
    Raw,
}

#[derive(Debug, Clone)]
enum Classifier {
    Spikformer(Box<Spikformer>),
    FullyConnected(ClassifyHead),
}

/// Outputs of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    /// `[T, C_front, H, W]` front-end maps.
    pub maps: NodeId,
    /// `[C]` firing rates.
    pub rates: NodeId,
    /// `[1, C]` rates times temperature.
    pub logits: NodeId,
    pub probe: Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rates: Vec<f64>,
    pub decision: usize,
}

/// Loss, decision and parameter gradients of one sample.
#[derive(Debug, Clone)]
pub struct SampleGrad<F> {
    pub loss: f64,
    pub decision: usize,
    pub grads: Vec<(ParamId, Tensor<F>)>,
}

#[derive(Debug, Clone)]
pub struct Model<F> {
    cfg: ModelConfig,
    store: ParamStore<F>,
    front: FrontEnd,
    classifier: Classifier,
    temperature: ParamId,
    mode: SpikeMode,
}

/// Assembles the model a config describes, with weights drawn from `cfg.seed`.
pub fn build_model<F: Real>(cfg: &ModelConfig) -> Result<Model<F>> {
    Model::new(cfg.clone())
}

impl<F: Real> Model<F> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let k = cfg.kernel_size;
        let front = match cfg.variant {
            Variant::TrainableEvconv => {
                let bound = 1.0 / ((2 * k * k) as f64).sqrt();
                let w = Tensor::from_fn(&[cfg.readout_channels, 2, k, k], |_| {
                    F::from_f64(rand::Rng::gen_range(&mut rng, -bound..=bound))
                });
                FrontEnd::Readout(store.add("readout.weight", w))
            }
            Variant::FixedGabor => {
                let params = GaborParams {
                    size: k,
                    ..GaborParams::default()
                };
                let kernels: Vec<_> = gabor_bank(&params)?.iter().map(|k| k.cast::<F>()).collect();
                let bank = ReadoutBank::shared(&kernels, 2)?;
                let w = Tensor::new(&[GABOR_CHANNELS, 2, k, k], bank.weights().to_vec())?;
                FrontEnd::Readout(store.add_frozen("readout.gabor", w))
            }
            Variant::NoEvconv => FrontEnd::Raw,
        };
        let classifier = match cfg.backbone {
            Backbone::Spikformer => Classifier::Spikformer(Box::new(Spikformer::new(
                &mut store,
                &mut rng,
                cfg.patch_config(),
                cfg.encoder_config(),
                cfg.num_classes,
                cfg.norm(),
            )?)),
            Backbone::FullyConnected => {
                let in_dim = cfg.front_channels() * cfg.height * cfg.width;
                Classifier::FullyConnected(ClassifyHead::new(&mut store, &mut rng, "fc", in_dim, cfg.num_classes, cfg.norm())?)
            }
        };
        let temperature = store.add("temperature", Tensor::full(&[1], F::from_f64(cfg.temperature)));
        Ok(Model {
            cfg,
            store,
            front,
            classifier,
            temperature,
            mode: SpikeMode::Hard,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn spike_mode(&self) -> SpikeMode {
        self.mode
    }

    /// [`SpikeMode::Relaxed`] swaps hard spikes for their smooth surrogate,
    /// which makes the whole model differentiable for gradient checks.
    pub fn set_spike_mode(&mut self, mode: SpikeMode) {
        self.mode = mode;
    }

    pub fn readout_param(&self) -> Option<ParamId> {
        match self.front {
            FrontEnd::Readout(id) => Some(id),
            FrontEnd::Raw => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Weight-independent input tensor: `[T, 2, H*K, W*K]` count maps, or
    /// `[T, 2, H, W]` per-pixel event counts without event convolution.
    pub fn prepare(&self, stream: &EventStream) -> Result<Tensor<F>> {
        prepare_input(&self.cfg, stream)
    }

    /// Records the forward pass of a prepared input on `g`.
    pub fn forward_graph(&self, g: &mut Graph<F>, input: &Tensor<F>) -> Result<ForwardOut> {
        let mut ctx = SpikeCtx::new(self.cfg.lif, self.mode);
        let x = g.constant(input.clone());
        let maps = match self.front {
            FrontEnd::Readout(id) => {
                let w = g.param(&self.store, id);
                g.conv2d(x, w, None, Conv2dSpec::strided(self.cfg.kernel_size))?
            }
            FrontEnd::Raw => x,
        };
        let head = match &self.classifier {
            Classifier::Spikformer(s) => s.forward(g, &self.store, &mut ctx, maps)?,
            Classifier::FullyConnected(head) => {
                let flat = g.flatten(maps)?;
                head.forward_pooled(g, &self.store, &mut ctx, flat)?
            }
        };
        let c = self.cfg.num_classes;
        let row = g.reshape(head.rates, &[1, c])?;
        let temp = g.param(&self.store, self.temperature);
        let logits = g.scale_by(row, temp)?;
        Ok(ForwardOut {
            maps,
            rates: head.rates,
            logits,
            probe: ctx.probe,
        })
    }

    pub fn predict_input(&self, input: &Tensor<F>) -> Result<Prediction> {
        let mut g = Graph::without_grad();
        let out = self.forward_graph(&mut g, input)?;
        let rates: Vec<f64> = g.value(out.rates).data().iter().map(|v| v.as_f64()).collect();
        Ok(Prediction {
            decision: decide(&rates),
            rates,
        })
    }

    pub fn forward(&self, stream: &EventStream) -> Result<Prediction> {
        self.predict_input(&self.prepare(stream)?)
    }

    /// Cross-entropy loss of a prepared input and its gradients.
    pub fn sample_grad(&self, input: &Tensor<F>, label: usize) -> Result<SampleGrad<F>> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, input)?;
        let loss = g.cross_entropy(out.logits, &[label])?;
        let rates: Vec<f64> = g.value(out.rates).data().iter().map(|v| v.as_f64()).collect();
        let loss_value = g.value(loss).data()[0].as_f64();
        g.backward(loss)?;
        Ok(SampleGrad {
            loss: loss_value,
            decision: decide(&rates),
            grads: g.param_grads().map(|(id, t)| (id, t.clone())).collect(),
        })
    }

    /// Loss of a prepared input without recording gradients.
    pub fn sample_loss(&self, input: &Tensor<F>, label: usize) -> Result<(f64, usize)> {
        let mut g = Graph::without_grad();
        let out = self.forward_graph(&mut g, input)?;
        let loss = g.cross_entropy(out.logits, &[label])?;
        let rates: Vec<f64> = g.value(out.rates).data().iter().map(|v| v.as_f64()).collect();
        Ok((g.value(loss).data()[0].as_f64(), decide(&rates)))
    }
}

/// See [`Model::prepare`].
pub fn prepare_input<F: Real>(cfg: &ModelConfig, stream: &EventStream) -> Result<Tensor<F>> {
    let (h, w) = (cfg.height, cfg.width);
    if (stream.width() as usize, stream.height() as usize) != (w, h) {
        return Err(Error::arg(format!(
            "stream is {}x{}, model expects {w}x{h}",
            stream.width(),
            stream.height()
        )));
    }
    let t = cfg.t_steps;
    let bins = bin_events(stream, t)?;
    match cfg.variant {
        Variant::TrainableEvconv | Variant::FixedGabor => {
            let k = cfg.kernel_size;
            let per_bin = 2 * h * k * w * k;
            let mut data = Vec::with_capacity(t * per_bin);
            for bin in &bins {
                let cmap = build_count_map(bin, k, h, w)?;
                data.extend(cmap.counts().iter().map(|&c| F::from_f64(c as f64)));
            }
            Tensor::new(&[t, 2, h * k, w * k], data)
        }
        Variant::NoEvconv => {
            let mut data = vec![F::zero(); t * 2 * h * w];
            for (i, bin) in bins.iter().enumerate() {
                for e in bin.events() {
                    let ch = e.polarity.channel();
                    data[((i * 2 + ch) * h + e.y as usize) * w + e.x as usize] += F::one();
                }
            }
            Tensor::new(&[t, 2, h, w], data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    #[test]
    fn no_evconv_frames_count_events() {
        let cfg = ModelConfig {
            variant: Variant::NoEvconv,
            ..ModelConfig::smoke()
        };
        let s = EventStream::new(
            32,
            32,
            100,
            vec![
                Event::new(0, 3, 4, Polarity::On),
                Event::new(1, 3, 4, Polarity::On),
                Event::new(99, 0, 0, Polarity::Off),
            ],
        )
        .unwrap();
        let x: Tensor<f32> = prepare_input(&cfg, &s).unwrap();
        assert_eq!(x.shape(), &[4, 2, 32, 32]);
        assert_eq!(x.data()[32 * 32 + 4 * 32 + 3], 2.0);
        assert_eq!(x.data()[3 * 2 * 32 * 32], 1.0);
        assert_eq!(x.sum(), 3.0);
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let model = build_model::<f32>(&ModelConfig::smoke()).unwrap();
        let s = EventStream::empty(16, 16, 100).unwrap();
        assert!(matches!(model.forward(&s), Err(Error::Argument(_))));
    }

    #[test]
    fn gabor_readout_is_frozen() {
        let cfg = ModelConfig {
            variant: Variant::FixedGabor,
            ..ModelConfig::smoke()
        };
        let m = build_model::<f32>(&cfg).unwrap();
        let id = m.readout_param().unwrap();
        assert!(!m.store().get(id).requires_grad());
        assert_eq!(m.store().get(id).value().shape(), &[4, 2, 3, 3]);
    }
}

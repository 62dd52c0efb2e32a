use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::snn::LifParams;
use crate::spikeformer::{square_grid, EncoderConfig, PatchEmbedConfig, SsaConfig, DEFAULT_SCALE};

/// Front end between the event stream and the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Count maps followed by a trainable stride-`K` readout.
    #[default]
    TrainableEvconv,
    /// Count maps followed by a frozen four-orientation Gabor readout.
    FixedGabor,
    /// Per-pixel event counts per bin, no event convolution.
    NoEvconv,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::TrainableEvconv, Variant::FixedGabor, Variant::NoEvconv];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TrainableEvconv => "trainable_evconv",
            Variant::FixedGabor => "fixed_gabor",
            Variant::NoEvconv => "no_evconv",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown variant \"{s}\" (trainable_evconv, fixed_gabor, no_evconv)")))
    }
}

/// Classifier that consumes the front-end maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backbone {
    #[default]
    Spikformer,
    /// Flatten, one linear layer, LIF class neurons.
    FullyConnected,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Spikformer => "spikformer",
            Backbone::FullyConnected => "fc",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spikformer" => Ok(Backbone::Spikformer),
            "fc" => Ok(Backbone::FullyConnected),
            _ => Err(Error::arg(format!("unknown backbone \"{s}\" (spikformer, fc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub width: usize,
    pub height: usize,
    pub kernel_size: usize,
    pub readout_channels: usize,
    pub t_steps: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub num_blocks: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub variant: Variant,
    pub backbone: Backbone,
    /// Standardize after linear maps (training aid).
    pub normalize: bool,
    /// Initial gain of every normalization.
    pub norm_gain: f64,
    pub attention_scale: f64,
    pub lif: LifParams,
    /// Initial value of the learnable logit temperature.
    pub temperature: f64,
    pub seed: u64,
}

/// Names accepted by [`ModelConfig::preset`] and [`TrainConfig::preset`].
pub const PRESETS: [&str; 4] = ["smoke", "mnist-dvs", "cifar10-dvs", "cifar10-dvs-1block"];

/// Orientations of the fixed readout bank.
pub const GABOR_CHANNELS: usize = 4;

impl ModelConfig {
    /// Normalization gain when normalization is enabled.
    pub fn norm(&self) -> Option<f64> {
        self.normalize.then_some(self.norm_gain)
    }

    /// 32x32 sensor, `D = 32`, 2 heads, 1 block, `T = 4`.
    pub fn smoke() -> Self {
        ModelConfig {
            width: 32,
            height: 32,
            kernel_size: 3,
            readout_channels: 4,
            t_steps: 4,
            patch_size: 4,
            embed_dim: 32,
            heads: 2,
            num_blocks: 1,
            mlp_ratio: 4,
            num_classes: 4,
            variant: Variant::TrainableEvconv,
            backbone: Backbone::Spikformer,
            normalize: true,
            norm_gain: 2.0,
            attention_scale: DEFAULT_SCALE,
            lif: LifParams::default(),
            temperature: 5.0,
            seed: 0,
        }
    }

    /// 28x28 input, 4 blocks, 6 heads, `T = 12`.
    pub fn mnist_dvs() -> Self {
        ModelConfig {
            width: 28,
            height: 28,
            readout_channels: 8,
            t_steps: 12,
            patch_size: 4,
            embed_dim: 192,
            heads: 6,
            num_blocks: 4,
            num_classes: 10,
            ..Self::smoke()
        }
    }

    /// 128x128 recordings, 2 blocks, 16 heads, `T = 10`.
    pub fn cifar10_dvs() -> Self {
        ModelConfig {
            width: 128,
            height: 128,
            readout_channels: 8,
            t_steps: 10,
            patch_size: 16,
            embed_dim: 256,
            heads: 16,
            num_blocks: 2,
            num_classes: 10,
            ..Self::smoke()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "smoke" => Ok(Self::smoke()),
            "mnist-dvs" => Ok(Self::mnist_dvs()),
            "cifar10-dvs" => Ok(Self::cifar10_dvs()),
            "cifar10-dvs-1block" => Ok(ModelConfig {
                num_blocks: 1,
                ..Self::cifar10_dvs()
            }),
            _ => Err(Error::arg(format!("unknown preset \"{name}\" ({})", PRESETS.join(", ")))),
        }
    }

    /// Channels the front end hands to the backbone.
    pub fn front_channels(&self) -> usize {
        match self.variant {
            Variant::TrainableEvconv => self.readout_channels,
            Variant::FixedGabor => GABOR_CHANNELS,
            Variant::NoEvconv => 2,
        }
    }

    pub fn patch_config(&self) -> PatchEmbedConfig {
        PatchEmbedConfig {
            in_channels: self.front_channels(),
            height: self.height,
            width: self.width,
            patch_size: self.patch_size,
            embed_dim: self.embed_dim,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            num_blocks: self.num_blocks,
            mlp_ratio: self.mlp_ratio,
            ssa: SsaConfig {
                embed_dim: self.embed_dim,
                heads: self.heads,
                scale: self.attention_scale,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.width == 0 || self.height == 0 || self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            p.push(format!("sensor {}x{} out of range", self.width, self.height));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            p.push(format!("kernel_size must be odd and positive, got {}", self.kernel_size));
        }
        if self.variant == Variant::TrainableEvconv && self.readout_channels == 0 {
            p.push("readout_channels must be positive".into());
        }
        if self.t_steps == 0 {
            p.push("t_steps must be at least 1".into());
        }
        if self.num_classes < 2 {
            p.push(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.normalize && !(self.norm_gain.is_finite() && self.norm_gain > 0.0) {
            p.push(format!("norm_gain must be positive, got {}", self.norm_gain));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            p.push(format!("temperature must be positive, got {}", self.temperature));
        }
        if let Err(Error::Config(lif)) = self.lif.validate() {
            p.extend(lif);
        }
        if self.backbone == Backbone::Spikformer {
            let patch = self.patch_config();
            let patch_problems = patch.problems();
            if patch_problems.is_empty() && square_grid(patch.num_patches()).is_err() {
                p.push(format!("{} patches do not form a square grid", patch.num_patches()));
            }
            p.extend(patch_problems);
            p.extend(self.encoder_config().problems());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::smoke()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::arg(format!("unknown optimizer \"{s}\" (sgd, adam)"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of a pooled dataset used for training when no explicit test
    /// set is given.
    pub train_fraction: f64,
    /// Stop early once training accuracy reaches 1.
    pub stop_at_perfect_train: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            epochs: 20,
            batch_size: 10,
            seed: 0,
            train_fraction: 0.9,
            stop_at_perfect_train: false,
        }
    }
}

impl TrainConfig {
    /// Batch size 10, or 8 for the CIFAR10-DVS presets.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "smoke" | "mnist-dvs" => Ok(Self::default()),
            "cifar10-dvs" | "cifar10-dvs-1block" => Ok(TrainConfig {
                batch_size: 8,
                ..Self::default()
            }),
            _ => Err(Error::arg(format!("unknown preset \"{name}\" ({})", PRESETS.join(", ")))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.lr.is_finite() && self.lr > 0.0) {
            p.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            p.push("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            p.push(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        let m = ModelConfig::mnist_dvs();
        assert_eq!((m.width, m.height, m.kernel_size, m.num_blocks, m.heads, m.t_steps), (28, 28, 3, 4, 6, 12));
        let c = ModelConfig::cifar10_dvs();
        assert_eq!((c.width, c.height, c.kernel_size, c.num_blocks, c.heads, c.t_steps), (128, 128, 3, 2, 16, 10));
        assert_eq!(ModelConfig::preset("cifar10-dvs-1block").unwrap().num_blocks, 1);
        assert_eq!(TrainConfig::preset("mnist-dvs").unwrap().batch_size, 10);
        assert_eq!(TrainConfig::preset("cifar10-dvs").unwrap().batch_size, 8);
        assert_eq!(TrainConfig::preset("cifar10-dvs-1block").unwrap().batch_size, 8);
    }

    #[test]
    fn violations_are_listed() {
        let cfg = ModelConfig {
            kernel_size: 4,
            patch_size: 5,
            heads: 3,
            ..ModelConfig::smoke()
        };
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("fc".parse::<Backbone>().unwrap(), Backbone::FullyConnected);
        assert!("gabor".parse::<Variant>().is_err());
    }
}

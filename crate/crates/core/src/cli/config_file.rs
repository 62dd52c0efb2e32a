//! `key = value` run files with `[model]`, `[train]` and `[data]` sections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, SyntheticDataset, TrainConfig};

/// Where samples come from. Without `dir`, a synthetic set is generated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub synthetic: SyntheticDataset,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(vec![format!("[{section}] {key}: invalid value \"{value}\"")]))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(vec![format!("[{section}] {key}: expected true or false, got \"{value}\"")])),
    }
}

fn unknown(section: &str, key: &str) -> Error {
    Error::Config(vec![format!("[{section}] unknown key \"{key}\"")])
}

fn set_model(m: &mut ModelConfig, key: &str, v: &str) -> Result<()> {
    let s = "model";
    match key {
        "width" => m.width = parse(s, key, v)?,
        "height" => m.height = parse(s, key, v)?,
        "kernel_size" => m.kernel_size = parse(s, key, v)?,
        "readout_channels" => m.readout_channels = parse(s, key, v)?,
        "t_steps" => m.t_steps = parse(s, key, v)?,
        "patch_size" => m.patch_size = parse(s, key, v)?,
        "embed_dim" => m.embed_dim = parse(s, key, v)?,
        "heads" => m.heads = parse(s, key, v)?,
        "num_blocks" => m.num_blocks = parse(s, key, v)?,
        "mlp_ratio" => m.mlp_ratio = parse(s, key, v)?,
        "num_classes" => m.num_classes = parse(s, key, v)?,
        "variant" => m.variant = v.trim().parse()?,
        "backbone" => m.backbone = v.trim().parse()?,
        "normalize" => m.normalize = parse_bool(s, key, v)?,
        "norm_gain" => m.norm_gain = parse(s, key, v)?,
        "attention_scale" => m.attention_scale = parse(s, key, v)?,
        "temperature" => m.temperature = parse(s, key, v)?,
        "seed" => m.seed = parse(s, key, v)?,
        "tau" => m.lif.tau = parse(s, key, v)?,
        "v_threshold" => m.lif.v_threshold = parse(s, key, v)?,
        "v_reset" => m.lif.v_reset = parse(s, key, v)?,
        "surrogate_alpha" => m.lif.surrogate_alpha = parse(s, key, v)?,
        _ => return Err(unknown(s, key)),
    }
    Ok(())
}

fn set_train(t: &mut TrainConfig, key: &str, v: &str) -> Result<()> {
    let s = "train";
    match key {
        "optimizer" => t.optimizer = v.trim().parse()?,
        "lr" => t.lr = parse(s, key, v)?,
        "epochs" => t.epochs = parse(s, key, v)?,
        "batch_size" => t.batch_size = parse(s, key, v)?,
        "seed" => t.seed = parse(s, key, v)?,
        "train_fraction" => t.train_fraction = parse(s, key, v)?,
        "stop_at_perfect_train" => t.stop_at_perfect_train = parse_bool(s, key, v)?,
        _ => return Err(unknown(s, key)),
    }
    Ok(())
}

fn set_data(d: &mut DataConfig, key: &str, v: &str) -> Result<()> {
    let s = "data";
    let syn = &mut d.synthetic;
    match key {
        "dir" => d.dir = Some(PathBuf::from(v.trim())),
        "test_dir" => d.test_dir = Some(PathBuf::from(v.trim())),
        "classes" => syn.classes = parse(s, key, v)?,
        "per_class" => syn.per_class = parse(s, key, v)?,
        "seed" => syn.seed = parse(s, key, v)?,
        "width" => syn.width = parse(s, key, v)?,
        "height" => syn.height = parse(s, key, v)?,
        "duration_us" => syn.duration = parse(s, key, v)?,
        "event_rate" => syn.event_rate = parse(s, key, v)?,
        "noise_rate" => syn.noise_rate = parse(s, key, v)?,
        _ => return Err(unknown(s, key)),
    }
    Ok(())
}

impl RunConfig {
    /// Parses run-file text. A `preset` key in `[model]` or `[train]` is
    /// applied before the other keys of that section.
    pub fn parse_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(vec![format!("malformed config: {e}")]))?;
        let mut cfg = RunConfig::default();
        for (section, props) in ini.iter() {
            match section {
                None if props.is_empty() => {}
                None => {
                    let key = props.iter().next().map(|(k, _)| k).unwrap_or_default();
                    return Err(Error::Config(vec![format!("key \"{key}\" outside any section")]));
                }
                Some("model") => {
                    if let Some(p) = props.get("preset") {
                        cfg.model = ModelConfig::preset(p.trim())?;
                    }
                    for (k, v) in props.iter().filter(|(k, _)| *k != "preset") {
                        set_model(&mut cfg.model, k, v)?;
                    }
                }
                Some("train") => {
                    if let Some(p) = props.get("preset") {
                        cfg.train = TrainConfig::preset(p.trim())?;
                    }
                    for (k, v) in props.iter().filter(|(k, _)| *k != "preset") {
                        set_train(&mut cfg.train, k, v)?;
                    }
                }
                Some("data") => {
                    for (k, v) in props.iter() {
                        set_data(&mut cfg.data, k, v)?;
                    }
                }
                Some(other) => return Err(Error::Config(vec![format!("unknown section [{other}]")])),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

/// `[model]` section that [`RunConfig::parse_str`] reads back to `m`.
pub fn model_section(m: &ModelConfig) -> String {
    let mut s = String::from("[model]\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("width", m.width.to_string());
    kv("height", m.height.to_string());
    kv("kernel_size", m.kernel_size.to_string());
    kv("readout_channels", m.readout_channels.to_string());
    kv("t_steps", m.t_steps.to_string());
    kv("patch_size", m.patch_size.to_string());
    kv("embed_dim", m.embed_dim.to_string());
    kv("heads", m.heads.to_string());
    kv("num_blocks", m.num_blocks.to_string());
    kv("mlp_ratio", m.mlp_ratio.to_string());
    kv("num_classes", m.num_classes.to_string());
    kv("variant", m.variant.to_string());
    kv("backbone", m.backbone.to_string());
    kv("normalize", m.normalize.to_string());
    kv("norm_gain", format!("{:?}", m.norm_gain));
    kv("attention_scale", format!("{:?}", m.attention_scale));
    kv("temperature", format!("{:?}", m.temperature));
    kv("seed", m.seed.to_string());
    kv("tau", format!("{:?}", m.lif.tau));
    kv("v_threshold", format!("{:?}", m.lif.v_threshold));
    kv("v_reset", format!("{:?}", m.lif.v_reset));
    kv("surrogate_alpha", format!("{:?}", m.lif.surrogate_alpha));
    s
}

/// `[train]` section that [`RunConfig::parse_str`] reads back to `t`.
pub fn train_section(t: &TrainConfig) -> String {
    let mut s = String::from("[train]\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("optimizer", t.optimizer.to_string());
    kv("lr", format!("{:?}", t.lr));
    kv("epochs", t.epochs.to_string());
    kv("batch_size", t.batch_size.to_string());
    kv("seed", t.seed.to_string());
    kv("train_fraction", format!("{:?}", t.train_fraction));
    kv("stop_at_perfect_train", t.stop_at_perfect_train.to_string());
    s
}

/// Complete run file for `cfg`.
pub fn run_file(cfg: &RunConfig) -> String {
    format!("{}\n{}\n{}", model_section(&cfg.model), train_section(&cfg.train), data_section(&cfg.data))
}

/// `[data]` section that [`RunConfig::parse_str`] reads back to `d`.
pub fn data_section(d: &DataConfig) -> String {
    let mut s = String::from("[data]\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    if let Some(p) = &d.dir {
        kv("dir", p.display().to_string());
    }
    if let Some(p) = &d.test_dir {
        kv("test_dir", p.display().to_string());
    }
    let syn = &d.synthetic;
    kv("classes", syn.classes.to_string());
    kv("per_class", syn.per_class.to_string());
    kv("seed", syn.seed.to_string());
    kv("width", syn.width.to_string());
    kv("height", syn.height.to_string());
    kv("duration_us", syn.duration.to_string());
    kv("event_rate", format!("{:?}", syn.event_rate));
    kv("noise_rate", format!("{:?}", syn.noise_rate));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{OptimizerKind, Variant};

    #[test]
    fn sections_and_presets() {
        let cfg = RunConfig::parse_str(
            "[model]\npreset = cifar10-dvs\nvariant = fixed_gabor\n\n[train]\npreset = cifar10-dvs\noptimizer = sgd\nlr = 0.01\n\n[data]\nper_class = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.model.num_blocks, 2);
        assert_eq!(cfg.model.heads, 16);
        assert_eq!(cfg.model.t_steps, 10);
        assert_eq!(cfg.model.variant, Variant::FixedGabor);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.optimizer, OptimizerKind::Sgd);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.data.synthetic.per_class, 8);
    }

    #[test]
    fn comments_are_ignored() {
        let cfg = RunConfig::parse_str("; run\n[model]\nvariant = no_evconv  ; raw frames\n# note\n[train]\nepochs = 3 # short\n").unwrap();
        assert_eq!(cfg.model.variant, Variant::NoEvconv);
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        assert!(RunConfig::parse_str("[model]\nwidht = 3\n").is_err());
        assert!(RunConfig::parse_str("[optim]\nlr = 3\n").is_err());
        assert!(RunConfig::parse_str("lr = 3\n").is_err());
        assert!(RunConfig::parse_str("[train]\nepochs = many\n").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = RunConfig::parse_str("[model]\nheads = 5\n[train]\nlr = 0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn run_file_reads_back() {
        let m = ModelConfig {
            variant: Variant::NoEvconv,
            norm_gain: 1.25,
            seed: 9,
            ..ModelConfig::mnist_dvs()
        };
        let d = DataConfig {
            test_dir: Some(PathBuf::from("held/out")),
            ..Default::default()
        };
        let t = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            lr: 0.25,
            stop_at_perfect_train: true,
            ..TrainConfig::default()
        };
        let cfg = RunConfig { model: m, train: t, data: d };
        assert_eq!(RunConfig::parse_str(&run_file(&cfg)).unwrap(), cfg);
    }
}

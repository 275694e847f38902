//! Run configuration: TOML file, architecture presets, and dotted-name
//! overrides (every key can be set from the command line as `--section.key`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::LabelSelector;
use crate::error::{Error, Result};
use crate::model::{ModelArch, Variant};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default)]
    pub logs: PathBuf,
    #[serde(default)]
    pub metrics: PathBuf,
    #[serde(default)]
    pub aspect_map: PathBuf,
    #[serde(default)]
    pub labels: PathBuf,
    #[serde(default)]
    pub provenance: PathBuf,
    #[serde(default)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Chunking {
    /// Window length in metric steps.
    pub t_steps: usize,
    /// Window stride in metric steps (defaults to non-overlapping).
    pub stride: usize,
    /// Metric grid spacing in milliseconds.
    pub step_ms: u64,
    /// Fixed log-sequence length per chunk.
    pub l_max: usize,
    /// Temporal train fraction.
    pub train_frac: f64,
}

impl Default for Chunking {
    fn default() -> Self {
        Self { t_steps: 10, stride: 10, step_ms: 1000, l_max: 64, train_frac: 0.7 }
    }
}

/// User-facing architecture: a preset plus overridable dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    /// `paper-arch` (2 encoder layers), `paper-impl` (4 layers), or `custom`.
    pub preset: String,
    pub embed_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub log_layers: usize,
    pub repr_dim: usize,
    pub intra_channels: Vec<usize>,
    pub inter_channels: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub kernel: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            preset: "custom".into(),
            embed_dim: 32,
            d_model: 32,
            n_heads: 2,
            d_ff: 64,
            log_layers: 2,
            repr_dim: 24,
            intra_channels: vec![8, 8],
            inter_channels: vec![32],
            head_hidden: vec![32, 16],
            kernel: 3,
        }
    }
}

impl ArchSpec {
    /// Apply the named preset's dimensions on top of the current values.
    pub fn with_preset(mut self) -> Result<Self> {
        match self.preset.as_str() {
            "custom" => {}
            "paper-arch" | "paper-impl" => {
                self.log_layers = if self.preset == "paper-arch" { 2 } else { 4 };
                self.d_model = 1024;
                self.n_heads = 8;
                self.d_ff = 2048;
                self.embed_dim = 32;
                self.repr_dim = 64;
                self.intra_channels = vec![16, 16];
                self.inter_channels = vec![256, 256];
                self.head_hidden = vec![512, 512, 512];
                self.kernel = 3;
            }
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        }
        Ok(self)
    }

    /// Resolve against the data-dependent pieces into a buildable model.
    pub fn resolve(
        &self,
        variant: Variant,
        aspects: Vec<(String, usize)>,
        t_steps: usize,
        l_max: usize,
        event_input_dim: usize,
    ) -> ModelArch {
        ModelArch {
            variant,
            embed_dim: event_input_dim,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            log_layers: self.log_layers,
            repr_dim: self.repr_dim,
            l_max,
            t_steps,
            aspects,
            intra_channels: self.intra_channels.clone(),
            inter_channels: self.inter_channels.clone(),
            head_hidden: self.head_hidden.clone(),
            kernel: self.kernel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ParsingConfig {
    pub sim_threshold: f64,
    pub max_depth: usize,
}

impl Default for ParsingConfig {
    fn default() -> Self {
        Self { sim_threshold: 0.5, max_depth: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingTrainConfig {
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for EmbeddingTrainConfig {
    fn default() -> Self {
        Self { window: 4, epochs: 3, negatives: 5, lr: 0.05, n_min: 3, n_max: 5 }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: String,
    pub paths: Paths,
    pub chunking: Chunking,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub select: LabelSelector,
    pub parsing: ParsingConfig,
    pub embedding: EmbeddingTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            variant: "full".into(),
            paths: Paths::default(),
            chunking: Chunking::default(),
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
            select: LabelSelector::default(),
            parsing: ParsingConfig::default(),
            embedding: EmbeddingTrainConfig::default(),
        }
    }
}

/// Keys accepted both in the TOML file and as `--<key>` CLI overrides.
pub const OVERRIDE_KEYS: &[&str] = &[
    "seed",
    "variant",
    "paths.logs",
    "paths.metrics",
    "paths.aspect_map",
    "paths.labels",
    "paths.provenance",
    "paths.out_dir",
    "chunking.t_steps",
    "chunking.stride",
    "chunking.step_ms",
    "chunking.l_max",
    "chunking.train_frac",
    "arch.preset",
    "arch.embed_dim",
    "arch.d_model",
    "arch.n_heads",
    "arch.d_ff",
    "arch.log_layers",
    "arch.repr_dim",
    "arch.kernel",
    "train.lr",
    "train.batch_size",
    "train.epochs_phase1",
    "train.epochs_phase2",
    "train.lambda",
    "train.tau",
    "select.workloads",
    "select.fault_ids",
    "parsing.sim_threshold",
    "parsing.max_depth",
    "embedding.window",
    "embedding.epochs",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant)
    }

    /// Apply one dotted-name override with a string value.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        let list = |value: &str| -> Vec<String> {
            value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };
        match key {
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant = value.to_string(),
            "paths.logs" => self.paths.logs = value.into(),
            "paths.metrics" => self.paths.metrics = value.into(),
            "paths.aspect_map" => self.paths.aspect_map = value.into(),
            "paths.labels" => self.paths.labels = value.into(),
            "paths.provenance" => self.paths.provenance = value.into(),
            "paths.out_dir" => self.paths.out_dir = value.into(),
            "chunking.t_steps" => self.chunking.t_steps = parse(key, value)?,
            "chunking.stride" => self.chunking.stride = parse(key, value)?,
            "chunking.step_ms" => self.chunking.step_ms = parse(key, value)?,
            "chunking.l_max" => self.chunking.l_max = parse(key, value)?,
            "chunking.train_frac" => self.chunking.train_frac = parse(key, value)?,
            "arch.preset" => self.arch.preset = value.to_string(),
            "arch.embed_dim" => self.arch.embed_dim = parse(key, value)?,
            "arch.d_model" => self.arch.d_model = parse(key, value)?,
            "arch.n_heads" => self.arch.n_heads = parse(key, value)?,
            "arch.d_ff" => self.arch.d_ff = parse(key, value)?,
            "arch.log_layers" => self.arch.log_layers = parse(key, value)?,
            "arch.repr_dim" => self.arch.repr_dim = parse(key, value)?,
            "arch.kernel" => self.arch.kernel = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.epochs_phase1" => self.train.epochs_phase1 = parse(key, value)?,
            "train.epochs_phase2" => self.train.epochs_phase2 = parse(key, value)?,
            "train.lambda" => self.train.lambda = parse(key, value)?,
            "train.tau" => self.train.tau = parse(key, value)?,
            "select.workloads" => self.select.workloads = list(value),
            "select.fault_ids" => self.select.fault_ids = list(value),
            "parsing.sim_threshold" => self.parsing.sim_threshold = parse(key, value)?,
            "parsing.max_depth" => self.parsing.max_depth = parse(key, value)?,
            "embedding.window" => self.embedding.window = parse(key, value)?,
            "embedding.epochs" => self.embedding.epochs = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn embedding_config(&self) -> crate::logs::EmbeddingConfig {
        crate::logs::EmbeddingConfig {
            dim: self.arch.embed_dim,
            window: self.embedding.window,
            epochs: self.embedding.epochs,
            negatives: self.embedding.negatives,
            lr: self.embedding.lr,
            n_min: self.embedding.n_min,
            n_max: self.embedding.n_max,
        }
    }
}

/// Cap rayon's worker parallelism from the HADESKIT_THREADS variable. Safe
/// to call more than once; only the first call wins.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("HADESKIT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_presets() {
        let c = RunConfig::default();
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.train.epochs_phase1, 50);
        assert_eq!(c.train.epochs_phase2, 50);
        assert_eq!(c.arch.embed_dim, 32);
        assert_eq!(c.chunking.t_steps, 10);
        assert_eq!(c.chunking.stride, c.chunking.t_steps);
        assert_eq!(c.parsing.sim_threshold, 0.5);
        assert_eq!(c.parsing.max_depth, 4);
    }

    #[test]
    fn paper_presets_pin_layer_counts() {
        let mut spec = ArchSpec { preset: "paper-arch".into(), ..Default::default() };
        spec = spec.with_preset().unwrap();
        assert_eq!(spec.log_layers, 2);
        assert_eq!(spec.d_model, 1024);
        assert_eq!(spec.inter_channels, vec![256, 256]);
        assert_eq!(spec.head_hidden, vec![512, 512, 512]);

        let spec = ArchSpec { preset: "paper-impl".into(), ..Default::default() }
            .with_preset()
            .unwrap();
        assert_eq!(spec.log_layers, 4);
    }

    #[test]
    fn overrides_reach_every_listed_key() {
        let mut c = RunConfig::default();
        for key in OVERRIDE_KEYS {
            let value = match *key {
                "variant" => "woM",
                "arch.preset" => "custom",
                k if k.starts_with("paths.") => "/tmp/x",
                "select.workloads" | "select.fault_ids" => "w0,w1",
                "chunking.train_frac" | "train.lambda" => "0.5",
                "train.tau" => "0.9",
                "train.lr" | "parsing.sim_threshold" => "0.25",
                _ => "7",
            };
            c.apply_override(key, value)
                .unwrap_or_else(|e| panic!("override {key} failed: {e}"));
        }
        assert_eq!(c.seed, 7);
        assert_eq!(c.select.workloads, vec!["w0", "w1"]);
        assert!(c.apply_override("no.such.key", "1").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = RunConfig::default();
        let text = toml::to_string_pretty(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, c.seed);
        assert_eq!(back.arch.d_model, c.arch.d_model);
    }
}

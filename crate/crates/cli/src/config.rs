//! Run configuration: TOML file, named profiles and `--set` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use svs_core::diffusion::{self, DiffusionSchedule};
use svs_core::features::MelConfig;
use svs_core::losses::AuxLossWeights;
use svs_core::nn::train::TrainConfig;
use svs_core::nn::NetConfig;

use crate::InputError;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SVS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Recordings, one `<stem>.wav` each.
    pub audio_dir: PathBuf,
    /// Phone alignments `<stem>.tsv` and optional lyric lines `<stem>.txt`.
    pub alignment_dir: PathBuf,
    /// Phrase recordings cut by `score build`.
    pub segment_dir: PathBuf,
    pub score_file: PathBuf,
    /// Normalized mels, F0 tracks and generated priors.
    pub feature_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    /// Externally supplied embeddings that replace the generated ones.
    pub embedding_dir: PathBuf,
    /// Synthesized mels and waveforms.
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            audio_dir: "data/wav".into(),
            alignment_dir: "data/align".into(),
            segment_dir: "work/segments".into(),
            score_file: "work/score.txt".into(),
            feature_dir: "work/features".into(),
            checkpoint_dir: "work/checkpoints".into(),
            embedding_dir: "data/embeddings".into(),
            output_dir: "work/output".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Shallow-diffusion start step used at synthesis time.
    pub q: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: diffusion::DEFAULT_STEPS,
            beta_start: diffusion::DEFAULT_BETA_START,
            beta_end: diffusion::DEFAULT_BETA_END,
            q: diffusion::DEFAULT_SHALLOW_STEP,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> anyhow::Result<DiffusionSchedule> {
        Ok(diffusion::linear_beta_schedule(
            self.steps,
            self.beta_start,
            self.beta_end,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub seed: u64,
    pub griffin_lim_iterations: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            griffin_lim_iterations: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker threads for per-utterance processing.
    pub workers: usize,
    /// Seed of the stand-in word, phone and prior embeddings.
    pub embedding_seed: u64,
    /// Iterations between progress lines during training.
    pub log_every: usize,
    /// Seeded `(t, ε)` draws per utterance when scoring the denoiser.
    pub eval_draws: usize,
    pub paths: Paths,
    pub mel: MelConfig,
    pub net: NetConfig,
    pub aux: TrainConfig,
    pub denoiser: TrainConfig,
    pub diffusion: DiffusionConfig,
    pub synthesis: SynthesisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            embedding_seed: 0,
            log_every: 100,
            eval_draws: 8,
            paths: Paths::default(),
            mel: MelConfig::default(),
            net: NetConfig::default(),
            aux: TrainConfig::default(),
            denoiser: TrainConfig::default(),
            diffusion: DiffusionConfig::default(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

/// Named presets applied on top of the defaults, before the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Full-size hyperparameters.
    Default,
    /// Small networks and short runs that overfit a handful of utterances
    /// in minutes.
    Toy,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = Self::default();
        if profile == Profile::Toy {
            cfg.net.aux_hidden = 64;
            cfg.net.denoiser_layers = 2;
            cfg.net.style_channels = 4;
            cfg.aux.iterations = 400;
            cfg.aux.batch_size = 8;
            cfg.aux.loss_weights = AuxLossWeights {
                l1: 1.0,
                style: 1.0,
                pitch: 1e-4,
            };
            cfg.denoiser.iterations = 1500;
            cfg.denoiser.batch_size = 8;
            cfg.log_every = 50;
        }
        cfg
    }

    /// Builds the configuration: profile defaults, then the file, then each
    /// `key=value` override in order.
    pub fn load(profile: Profile, file: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut value = toml::Value::try_from(Self::for_profile(profile))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| InputError(format!("cannot read config {}", path.display())))?;
            let file_value: toml::Value =
                toml::from_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
            merge(&mut value, file_value, "")?;
        }
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e| InputError(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let check = |r: svs_core::Result<()>| r.map_err(|e| InputError(format!("invalid configuration: {e}")));
        check(self.mel.validate())?;
        check(self.net.validate())?;
        if self.net.n_mels != self.mel.n_mels {
            bail!(InputError("net.n_mels must equal mel.n_mels".into()));
        }
        if self.workers == 0 {
            bail!(InputError("workers must be at least 1".into()));
        }
        if self.diffusion.q > self.diffusion.steps {
            bail!(InputError(format!(
                "diffusion.q = {} exceeds diffusion.steps = {}",
                self.diffusion.q, self.diffusion.steps
            )));
        }
        self.diffusion
            .schedule()
            .map_err(|e| InputError(format!("invalid diffusion schedule: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Overlays `src` onto `dst`, rejecting keys that `dst` does not have.
fn merge(dst: &mut toml::Value, src: toml::Value, prefix: &str) -> anyhow::Result<()> {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => bail!(InputError(format!("unknown configuration key {key:?}"))),
                }
            }
            Ok(())
        }
        (d, s) => {
            *d = s;
            Ok(())
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal and falls back to a plain string.
fn apply_override(root: &mut toml::Value, item: &str) -> anyhow::Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| InputError(format!("override {item:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut slot = &mut *root;
    for part in key.split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| InputError(format!("unknown configuration key {key:?}")))?;
    }
    if slot.is_table() {
        bail!(InputError(format!("{key:?} is a section, not a value")));
    }
    *slot = value;
    Ok(())
}

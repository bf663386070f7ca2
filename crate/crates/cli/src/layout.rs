//! On-disk layout of the pipeline and the loaders shared by the commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use svs_core::features::MelSpectrogram;
use svs_core::nn::cond;
use svs_core::nn::io::{read_tensor, write_tensor};
use svs_core::nn::{ContentInputs, Tensor};
use svs_core::score::{parse_scores, MusicScore};

use crate::config::RunConfig;
use crate::{input, InputError};

pub const AUX_CHECKPOINT: &str = "aux.ckpt";
pub const DENOISER_CHECKPOINT: &str = "denoiser.ckpt";
pub const AUX_LOSS_CSV: &str = "aux_loss.csv";
pub const DENOISER_LOSS_CSV: &str = "denoiser_loss.csv";
pub const FAILED_SUFFIX: &str = ".failed";

pub fn segment_wav(cfg: &RunConfig, utt: &str) -> PathBuf {
    cfg.paths.segment_dir.join(format!("{utt}.wav"))
}

pub fn mel_file(dir: &Path, utt: &str) -> PathBuf {
    dir.join(format!("{utt}.mel.emb"))
}

pub fn f0_file(cfg: &RunConfig, utt: &str) -> PathBuf {
    cfg.paths.feature_dir.join(format!("{utt}.f0.emb"))
}

/// Generated prior `<utt>.<kind>.emb` in the feature directory.
pub fn generated_prior(cfg: &RunConfig, utt: &str, kind: &str) -> PathBuf {
    cfg.paths.feature_dir.join(format!("{utt}.{kind}.emb"))
}

/// An externally supplied embedding if present, else the generated one.
fn embedding_or(cfg: &RunConfig, utt: &str, kind: &str, fallback: PathBuf) -> PathBuf {
    let external = cfg.paths.embedding_dir.join(format!("{utt}.{kind}.emb"));
    if external.is_file() {
        external
    } else {
        fallback
    }
}

pub fn checkpoint(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.checkpoint_dir.join(name)
}

pub fn failed(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(FAILED_SUFFIX);
    PathBuf::from(s)
}

/// Sorted file stems in `dir` with the given extension.
pub fn stems(dir: &Path, ext: &str) -> anyhow::Result<Vec<String>> {
    if !dir.is_dir() {
        bail!(InputError(format!("directory {} does not exist", dir.display())));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parent directory of `path` is created before writing.
pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn no_utterances() -> anyhow::Error {
    InputError("no utterances found".into()).into()
}

/// Every score in the configured score file, optionally restricted to `only`.
pub fn load_scores(cfg: &RunConfig, only: &[String]) -> anyhow::Result<Vec<MusicScore>> {
    let path = &cfg.paths.score_file;
    let bytes =
        std::fs::read(path).map_err(|e| InputError(format!("cannot read score file {}: {e}", path.display())))?;
    let mut scores = input(parse_scores(&bytes), path.display())?;
    if !only.is_empty() {
        for id in only {
            if !scores.iter().any(|s| &s.utterance_id == id) {
                bail!(InputError(format!("utterance {id:?} is not in {}", path.display())));
            }
        }
        scores.retain(|s| only.contains(&s.utterance_id));
    }
    if scores.is_empty() {
        return Err(no_utterances());
    }
    Ok(scores)
}

pub fn read_tensor_input(path: &Path) -> anyhow::Result<Tensor> {
    input(read_tensor(path), path.display())
}

pub fn read_mel(path: &Path) -> anyhow::Result<MelSpectrogram> {
    let t = read_tensor_input(path)?;
    if t.rank() != 2 {
        bail!(InputError(format!(
            "{}: expected a [frames, bands] tensor",
            path.display()
        )));
    }
    let (f, m) = (t.shape()[0], t.shape()[1]);
    input(MelSpectrogram::new(f, m, t.into_data()), path.display())
}

pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> anyhow::Result<()> {
    let t = Tensor::matrix(mel.n_frames, mel.n_mels, mel.data.clone())?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(write_tensor(path, &t)?)
}

/// Mert and vec priors of an utterance, preferring supplied embeddings.
pub fn priors(cfg: &RunConfig, utt: &str) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let load = |kind: &str| -> anyhow::Result<Vec<f64>> {
        let path = embedding_or(cfg, utt, kind, generated_prior(cfg, utt, kind));
        if !path.is_file() {
            bail!(InputError(format!(
                "missing {kind} prior {} (run `features extract` or supply one in {})",
                path.display(),
                cfg.paths.embedding_dir.display()
            )));
        }
        Ok(read_tensor_input(&path)?.into_data())
    };
    Ok((load("mert")?, load("vec")?))
}

/// Content-encoder inputs for `score` over `n_frames`, using supplied
/// `<utt>.word.emb` / `<utt>.phone.emb` row embeddings when present.
pub fn content_inputs(cfg: &RunConfig, score: &MusicScore, n_frames: usize) -> anyhow::Result<ContentInputs> {
    let utt = &score.utterance_id;
    let rows = |kind: &str, generated: svs_core::Result<Tensor>| -> anyhow::Result<Tensor> {
        let path = cfg.paths.embedding_dir.join(format!("{utt}.{kind}.emb"));
        if path.is_file() {
            read_tensor_input(&path)
        } else {
            Ok(generated?)
        }
    };
    let words = rows("word", cond::word_rows(score, cfg.embedding_seed))?;
    let phones = rows("phone", cond::phone_rows(score, cfg.embedding_seed))?;
    input(
        cond::content_inputs_with(score, n_frames, &cfg.mel, words, phones),
        format!("utterance {utt}"),
    )
}

//! `train aux` and `train denoiser`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use svs_core::features::{MelConfig, MelFilterbank};
use svs_core::nn::io::{load_checkpoint, save_checkpoint, Checkpoint};
use svs_core::nn::train::{
    content_embedding, evaluate_denoiser, train_aux, train_denoiser, Critics, DenoiserExample, Example, Stage,
    TrainConfig,
};
use svs_core::nn::{AuxModel, Denoiser, NetConfig, ParamStore};
use svs_core::Error;

use crate::config::RunConfig;
use crate::layout::{self, AUX_CHECKPOINT, AUX_LOSS_CSV, DENOISER_CHECKPOINT, DENOISER_LOSS_CSV};
use crate::{input, pool, InputError};

/// Configuration stored in every checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub net: NetConfig,
    pub mel: MelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StageKind {
    Aux,
    Denoiser,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Aux => "aux",
            StageKind::Denoiser => "denoiser",
        }
    }

    fn files(self) -> (&'static str, &'static str) {
        match self {
            StageKind::Aux => (AUX_CHECKPOINT, AUX_LOSS_CSV),
            StageKind::Denoiser => (DENOISER_CHECKPOINT, DENOISER_LOSS_CSV),
        }
    }
}

/// Loads a stage checkpoint, failing with a message naming the stage.
pub fn load_stage(cfg: &RunConfig, kind: StageKind) -> anyhow::Result<(Checkpoint, StoredConfig)> {
    let path = layout::checkpoint(cfg, kind.files().0);
    if !path.is_file() {
        bail!(InputError(format!(
            "missing {} checkpoint {} (run `train {}` first)",
            kind.name(),
            path.display(),
            kind.name()
        )));
    }
    let ckpt = input(load_checkpoint(&path), path.display())?;
    if ckpt.stage != kind.name() {
        bail!(InputError(format!(
            "{} holds a {:?} stage, expected {:?}",
            path.display(),
            ckpt.stage,
            kind.name()
        )));
    }
    let stored: StoredConfig = serde_json::from_value(ckpt.config.clone())
        .map_err(|e| InputError(format!("{}: bad manifest config: {e}", path.display())))?;
    Ok((ckpt, stored))
}

/// Frozen auxiliary model rebuilt from its checkpoint.
pub fn load_aux(cfg: &RunConfig) -> anyhow::Result<(AuxModel, ParamStore)> {
    let (ckpt, stored) = load_stage(cfg, StageKind::Aux)?;
    let (model, mut params) = AuxModel::new(&stored.net, 0);
    input(params.load_from(&ckpt.params), "aux checkpoint")?;
    Ok((model, params))
}

pub fn load_denoiser(cfg: &RunConfig) -> anyhow::Result<(Denoiser, ParamStore)> {
    let (ckpt, stored) = load_stage(cfg, StageKind::Denoiser)?;
    let (model, mut params) = Denoiser::new(&stored.net, 0);
    input(params.load_from(&ckpt.params), "denoiser checkpoint")?;
    Ok((model, params))
}

/// Training utterances: score, normalized target mel and priors.
pub fn aux_examples(cfg: &RunConfig, only: &[String]) -> anyhow::Result<Vec<Example>> {
    let scores = layout::load_scores(cfg, only)?;
    pool::map_ordered(cfg.workers, &scores, |score| {
        let utt = &score.utterance_id;
        let target = layout::read_mel(&layout::mel_file(&cfg.paths.feature_dir, utt))?;
        if target.n_mels != cfg.mel.n_mels {
            bail!(InputError(format!(
                "{utt}: mel has {} bands, configuration expects {}",
                target.n_mels, cfg.mel.n_mels
            )));
        }
        let inputs = layout::content_inputs(cfg, score, target.n_frames)?;
        let (mert, vec) = layout::priors(cfg, utt)?;
        Ok(Example {
            id: utt.clone(),
            inputs,
            target,
            mert,
            vec,
        })
    })
}

fn stored_config(cfg: &RunConfig, train: &TrainConfig) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(StoredConfig {
        net: cfg.net.clone(),
        mel: cfg.mel.clone(),
        train: train.clone(),
    })?)
}

fn save_stage<M>(path: &Path, kind: StageKind, stage: &Stage<M>, config: &serde_json::Value) -> anyhow::Result<()> {
    let ckpt = Checkpoint {
        stage: kind.name().to_string(),
        iteration: stage.iteration,
        params: stage.params.clone(),
        optimizer: Some(stage.optimizer.clone()),
        config: config.clone(),
    };
    if let Some(parent) = path.parent() {
        layout::create_dir(parent)?;
    }
    save_checkpoint(path, &ckpt).with_context(|| format!("saving {}", path.display()))
}

/// Writes the loss log; a resumed run appends to an existing log.
fn write_csv(path: &Path, header: &str, rows: &str, resumed: bool) -> anyhow::Result<()> {
    let mut text = if resumed && path.is_file() {
        std::fs::read_to_string(path)?
    } else {
        format!("{header}\n")
    };
    text.push_str(rows);
    layout::write_file(path, text.as_bytes())
}

/// Restores `stage` from the saved checkpoint of the same kind.
fn resume_into<M>(cfg: &RunConfig, kind: StageKind, stage: &mut Stage<M>) -> anyhow::Result<()> {
    let (ckpt, stored) = load_stage(cfg, kind)?;
    if stored.net != cfg.net {
        bail!(InputError(format!(
            "{} checkpoint was trained with a different [net] configuration",
            kind.name()
        )));
    }
    input(stage.params.load_from(&ckpt.params), "checkpoint")?;
    if let Some(opt) = ckpt.optimizer {
        stage.optimizer = opt;
    }
    stage.iteration = ckpt.iteration;
    Ok(())
}

struct Outcome {
    checkpoint: PathBuf,
    error: Option<Error>,
}

/// Saves the result of a training run. On divergence the partial state is
/// kept next to the checkpoint with a `.failed` suffix.
#[allow(clippy::too_many_arguments)]
fn finish<M>(
    cfg: &RunConfig,
    kind: StageKind,
    stage: &Stage<M>,
    train: &TrainConfig,
    header: &str,
    rows: &str,
    resumed: bool,
    result: svs_core::Result<()>,
) -> anyhow::Result<Outcome> {
    let (ckpt_name, csv_name) = kind.files();
    let checkpoint = layout::checkpoint(cfg, ckpt_name);
    let config = stored_config(cfg, train)?;
    write_csv(&layout::checkpoint(cfg, csv_name), header, rows, resumed)?;
    match result {
        Ok(()) => {
            save_stage(&checkpoint, kind, stage, &config)?;
            Ok(Outcome {
                checkpoint,
                error: None,
            })
        }
        Err(e) => {
            let failed = layout::failed(&checkpoint);
            save_stage(&failed, kind, stage, &config)?;
            Ok(Outcome {
                checkpoint: failed,
                error: Some(e),
            })
        }
    }
}

fn diverged(kind: StageKind, outcome: Outcome) -> anyhow::Result<()> {
    match outcome.error {
        None => Ok(()),
        Some(e) => bail!(
            "{} training aborted: {e}; partial checkpoint kept at {}",
            kind.name(),
            outcome.checkpoint.display()
        ),
    }
}

pub fn run_aux(cfg: &RunConfig, resume: bool) -> anyhow::Result<()> {
    let kind = StageKind::Aux;
    let data = aux_examples(cfg, &[])?;
    let (model, params) = AuxModel::new(&cfg.net, cfg.aux.seed);
    let mut stage = Stage::new(model, params, cfg.aux.optimizer.clone());
    if resume {
        resume_into(cfg, kind, &mut stage)?;
    }
    let fb = MelFilterbank::new(&cfg.mel)?;
    let critics = Critics::new(&cfg.net, fb.centers().to_vec(), cfg.embedding_seed);
    let mut rows = String::new();
    let mut last = None;
    let result = train_aux(&mut stage, &critics, &data, &cfg.aux, |it, b| {
        let _ = writeln!(rows, "{it},{},{},{},{}", b.l1, b.style, b.pitch, b.total);
        if cfg.log_every > 0 && it % cfg.log_every as u64 == 0 {
            eprintln!(
                "aux {it}: l1 {:.5} style {:.6} pitch {:.4} total {:.5}",
                b.l1, b.style, b.pitch, b.total
            );
        }
        last = Some(*b);
    });
    let header = "iteration,l1,style,pitch,total";
    let outcome = finish(cfg, kind, &stage, &cfg.aux, header, &rows, resume, result)?;
    let path = outcome.checkpoint.display().to_string();
    diverged(kind, outcome)?;
    match last {
        Some(b) => println!(
            "train aux: iteration {}, l1 {:.5}, style {:.6}, pitch {:.4}, total {:.5} -> {path}",
            stage.iteration, b.l1, b.style, b.pitch, b.total
        ),
        None => println!("train aux: iteration {} (no new iterations) -> {path}", stage.iteration),
    }
    Ok(())
}

/// Denoiser training utterances with `e_c` from the frozen auxiliary model.
pub fn denoiser_examples(cfg: &RunConfig) -> anyhow::Result<Vec<DenoiserExample>> {
    let (aux, aux_params) = load_aux(cfg)?;
    let data = aux_examples(cfg, &[])?;
    pool::map_ordered(cfg.workers, &data, |ex| {
        Ok(DenoiserExample {
            id: ex.id.clone(),
            e_c: content_embedding(&aux, &aux_params, &ex.inputs)?,
            target: ex.target.clone(),
            mert: ex.mert.clone(),
            vec: ex.vec.clone(),
        })
    })
}

pub fn run_denoiser(cfg: &RunConfig, resume: bool) -> anyhow::Result<()> {
    let kind = StageKind::Denoiser;
    let data = denoiser_examples(cfg)?;
    let sched = cfg.diffusion.schedule()?;
    let (model, params) = Denoiser::new(&cfg.net, cfg.denoiser.seed);
    let mut stage = Stage::new(model, params, cfg.denoiser.optimizer.clone());
    if resume {
        resume_into(cfg, kind, &mut stage)?;
    }
    let mut rows = String::new();
    let result = train_denoiser(&mut stage, &data, &sched, &cfg.denoiser, |it, loss| {
        let _ = writeln!(rows, "{it},{loss}");
        if cfg.log_every > 0 && it % cfg.log_every as u64 == 0 {
            eprintln!("denoiser {it}: mae {loss:.5}");
        }
    });
    let outcome = finish(
        cfg,
        kind,
        &stage,
        &cfg.denoiser,
        "iteration,denoise",
        &rows,
        resume,
        result,
    )?;
    let path = outcome.checkpoint.display().to_string();
    diverged(kind, outcome)?;
    let mae = evaluate_denoiser(
        &stage.model,
        &stage.params,
        &data,
        &sched,
        cfg.eval_draws,
        cfg.denoiser.seed,
    )?;
    println!(
        "train denoiser: iteration {}, mae {mae:.5} over {} seeded draws per utterance -> {path}",
        stage.iteration, cfg.eval_draws
    );
    Ok(())
}

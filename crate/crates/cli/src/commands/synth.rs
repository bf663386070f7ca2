//! `synthesize`: score to mel through the auxiliary decoder and shallow
//! diffusion, then to a waveform through Griffin-Lim.

use anyhow::Context;
use svs_core::audio::write_wav;
use svs_core::features::{denormalize_mel, frame_count, griffin_lim, GriffinLimConfig, MelSpectrogram};
use svs_core::nn::train::{aux_mel, content_embedding, refine_mel};
use svs_core::SAMPLE_RATE;

use crate::commands::train::{load_aux, load_denoiser};
use crate::config::RunConfig;
use crate::{layout, pool};

/// Mel frame count implied by a score's total duration.
pub fn score_frames(cfg: &RunConfig, total_seconds: f64) -> usize {
    let samples = (total_seconds * SAMPLE_RATE as f64).round() as usize;
    frame_count(samples, cfg.mel.fft_size, cfg.mel.hop)
}

pub fn run(cfg: &RunConfig, only: &[String]) -> anyhow::Result<()> {
    let q = cfg.diffusion.q;
    let (aux, aux_params) = load_aux(cfg)?;
    // the denoiser is not needed when the diffusion loop is bypassed
    let denoiser = if q > 0 { Some(load_denoiser(cfg)?) } else { None };
    let sched = cfg.diffusion.schedule()?;
    let all = layout::load_scores(cfg, &[])?;
    let chosen = layout::load_scores(cfg, only)?;
    let jobs: Vec<(u64, &svs_core::score::MusicScore)> = all
        .iter()
        .enumerate()
        .filter(|(_, s)| chosen.iter().any(|c| c.utterance_id == s.utterance_id))
        .map(|(i, s)| (i as u64, s))
        .collect();

    let out = pool::map_ordered(cfg.workers, &jobs, |&(index, score)| {
        let utt = &score.utterance_id;
        let n_frames = score_frames(cfg, score.total_duration());
        let inputs = layout::content_inputs(cfg, score, n_frames)?;
        let m_hat = aux_mel(&aux, &aux_params, &inputs, cfg.mel.n_mels)?;
        let mel = match &denoiser {
            Some((model, params)) => {
                let e_c = content_embedding(&aux, &aux_params, &inputs)?;
                let (mert, vec) = layout::priors(cfg, utt)?;
                let seed = cfg.synthesis.seed.wrapping_add(index);
                refine_mel(model, params, &e_c, &mert, &vec, &m_hat, q, &sched, seed)?
            }
            None => m_hat,
        };
        let gl = GriffinLimConfig {
            iterations: cfg.synthesis.griffin_lim_iterations,
            seed: cfg.synthesis.seed.wrapping_add(index),
        };
        let wave = griffin_lim(&denormalize_mel(&mel, &cfg.mel), &cfg.mel, &gl)?;
        Ok((utt.clone(), mel, wave))
    })?;

    layout::create_dir(&cfg.paths.output_dir)?;
    let mut seconds = 0.0;
    for (utt, mel, wave) in &out {
        write_outputs(cfg, utt, mel, wave)?;
        seconds += wave.len() as f64 / SAMPLE_RATE as f64;
    }
    println!(
        "synthesize: {} utterances, q = {q}, {seconds:.3} s of audio -> {}",
        out.len(),
        cfg.paths.output_dir.display()
    );
    Ok(())
}

fn write_outputs(cfg: &RunConfig, utt: &str, mel: &MelSpectrogram, wave: &[f64]) -> anyhow::Result<()> {
    layout::write_mel(&layout::mel_file(&cfg.paths.output_dir, utt), mel)?;
    let wav = cfg.paths.output_dir.join(format!("{utt}.wav"));
    write_wav(&wav, wave).with_context(|| format!("writing {}", wav.display()))
}

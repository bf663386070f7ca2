//! `features extract`: normalized mels, F0 tracks and generated priors for
//! every phrase in the score file.

use svs_core::audio::read_wav;
use svs_core::features::{mel_spectrogram, normalize_mel};
use svs_core::nn::cond::prior_embeddings;
use svs_core::nn::io::write_tensor;
use svs_core::nn::Tensor;
use svs_core::score::{extract_f0_autocorr, PitchConfig};

use crate::config::RunConfig;
use crate::layout;
use crate::{input, pool};

struct Extracted {
    utt: String,
    mel: svs_core::features::MelSpectrogram,
    f0: Vec<f64>,
    mert: Vec<f64>,
    vec: Vec<f64>,
}

pub fn run(cfg: &RunConfig, only: &[String]) -> anyhow::Result<()> {
    let scores = layout::load_scores(cfg, only)?;
    let out = pool::map_ordered(cfg.workers, &scores, |score| {
        let utt = &score.utterance_id;
        let path = layout::segment_wav(cfg, utt);
        let wave = input(read_wav(&path), path.display())?;
        let raw = input(mel_spectrogram(&wave, &cfg.mel), path.display())?;
        let track = input(extract_f0_autocorr(&wave, &PitchConfig::default()), path.display())?;
        let (mert, vec) = prior_embeddings(&track, &raw, cfg.embedding_seed);
        let f0 = track
            .f0_hz
            .iter()
            .zip(&track.voiced)
            .map(|(&f, &v)| if v { f } else { 0.0 })
            .collect();
        Ok(Extracted {
            utt: utt.clone(),
            mel: normalize_mel(&raw, &cfg.mel),
            f0,
            mert,
            vec,
        })
    })?;
    layout::create_dir(&cfg.paths.feature_dir)?;
    let mut frames = 0;
    for e in out {
        layout::write_mel(&layout::mel_file(&cfg.paths.feature_dir, &e.utt), &e.mel)?;
        write_tensor(&layout::f0_file(cfg, &e.utt), &Tensor::vector(e.f0))?;
        write_tensor(&layout::generated_prior(cfg, &e.utt, "mert"), &Tensor::vector(e.mert))?;
        write_tensor(&layout::generated_prior(cfg, &e.utt, "vec"), &Tensor::vector(e.vec))?;
        frames += e.mel.n_frames;
    }
    println!(
        "features extract: {} utterances, {frames} mel frames -> {}",
        scores.len(),
        cfg.paths.feature_dir.display()
    );
    Ok(())
}

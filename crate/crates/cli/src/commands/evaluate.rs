//! `evaluate`: objective metrics between paired reference and generated
//! recordings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::bail;
use serde::{Deserialize, Serialize};
use svs_core::audio::read_wav;
use svs_core::features::{mel_cepstrum, mel_spectrogram, normalize_mel, MelSpectrogram};
use svs_core::metrics::{cosine_similarity, logf0_rmse, mcd, mel_mae, vuv_accuracy, EvalReport};
use svs_core::nn::io::read_tensor;
use svs_core::score::{extract_f0_autocorr, PitchConfig};

use crate::config::RunConfig;
use crate::{input, layout, pool, InputError};

/// Cepstral order used for MCD and the fallback timbre embedding.
pub const CEPSTRAL_ORDER: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub utterances: BTreeMap<String, EvalReport>,
    pub mean: EvalReport,
    /// Ids present on only one side.
    pub missing: Vec<String>,
    /// Ids whose metrics could not be computed, with the reason.
    pub failed: BTreeMap<String, String>,
}

struct Analysis {
    mel: MelSpectrogram,
    norm: MelSpectrogram,
    f0: Vec<f64>,
    voiced: Vec<bool>,
}

fn analyse(cfg: &RunConfig, path: &Path) -> anyhow::Result<Analysis> {
    let wave = input(read_wav(path), path.display())?;
    let mel = input(mel_spectrogram(&wave, &cfg.mel), path.display())?;
    let track = input(extract_f0_autocorr(&wave, &PitchConfig::default()), path.display())?;
    Ok(Analysis {
        norm: normalize_mel(&mel, &cfg.mel),
        mel,
        f0: track.f0_hz,
        voiced: track.voiced,
    })
}

/// Frame-mean of the mel cepstrum, the stand-in speaker embedding.
fn mean_cepstrum(c: &[Vec<f64>]) -> Vec<f64> {
    let n = c.len().max(1) as f64;
    (0..CEPSTRAL_ORDER)
        .map(|d| c.iter().map(|f| f[d]).sum::<f64>() / n)
        .collect()
}

/// Speaker embeddings for the cosine score: `<utt>.spk.emb` next to both
/// recordings when present, else the mean cepstra.
fn speaker_vectors(
    utt: &str,
    dirs: (&Path, &Path),
    cepstra: (&[Vec<f64>], &[Vec<f64>]),
) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let a = dirs.0.join(format!("{utt}.spk.emb"));
    let b = dirs.1.join(format!("{utt}.spk.emb"));
    if a.is_file() && b.is_file() {
        let ta = input(read_tensor(&a), a.display())?;
        let tb = input(read_tensor(&b), b.display())?;
        return Ok((ta.into_data(), tb.into_data()));
    }
    Ok((mean_cepstrum(cepstra.0), mean_cepstrum(cepstra.1)))
}

/// Scores one pair. Sequences are compared over their common length.
pub fn evaluate_pair(cfg: &RunConfig, utt: &str, reference: &Path, generated: &Path) -> anyhow::Result<EvalReport> {
    let r = analyse(cfg, &reference.join(format!("{utt}.wav")))?;
    let g = analyse(cfg, &generated.join(format!("{utt}.wav")))?;
    let frames = r.mel.n_frames.min(g.mel.n_frames);
    let cr = mel_cepstrum(&r.mel.truncated(frames), CEPSTRAL_ORDER)?;
    let cg = mel_cepstrum(&g.mel.truncated(frames), CEPSTRAL_ORDER)?;
    let cells = frames * r.mel.n_mels;
    let k = r.f0.len().min(g.f0.len());
    let (sr, sg) = speaker_vectors(utt, (reference, generated), (&cr, &cg))?;
    Ok(EvalReport {
        mcd_db: mcd(&cr, &cg)?,
        logf0_rmse: logf0_rmse(&r.f0[..k], &g.f0[..k], &r.voiced[..k], &g.voiced[..k])?,
        mel_mae: mel_mae(&r.norm.data[..cells], &g.norm.data[..cells])?,
        vuv_accuracy: vuv_accuracy(&r.voiced[..k], &g.voiced[..k])?,
        cosine_similarity: cosine_similarity(&sr, &sg)?,
    })
}

pub fn evaluate_dirs(cfg: &RunConfig, reference: &Path, generated: &Path) -> anyhow::Result<Evaluation> {
    let refs = layout::stems(reference, "wav")?;
    let gens = layout::stems(generated, "wav")?;
    let paired: Vec<String> = refs.iter().filter(|s| gens.contains(s)).cloned().collect();
    let mut missing: Vec<String> = refs
        .iter()
        .chain(&gens)
        .filter(|s| !paired.contains(s))
        .cloned()
        .collect();
    missing.sort();
    missing.dedup();
    if paired.is_empty() {
        bail!(InputError(format!(
            "no utterance pairs between {} and {}",
            reference.display(),
            generated.display()
        )));
    }
    let results = pool::map_ordered(cfg.workers, &paired, |utt| {
        Ok(evaluate_pair(cfg, utt, reference, generated).map_err(|e| format!("{e:#}")))
    })?;
    let mut utterances = BTreeMap::new();
    let mut failed = BTreeMap::new();
    for (utt, r) in paired.into_iter().zip(results) {
        match r {
            Ok(report) => {
                utterances.insert(utt, report);
            }
            Err(reason) => {
                failed.insert(utt, reason);
            }
        }
    }
    let reports: Vec<EvalReport> = utterances.values().copied().collect();
    if reports.is_empty() {
        bail!("no utterance could be evaluated: {failed:?}");
    }
    Ok(Evaluation {
        mean: EvalReport::mean(&reports)?,
        utterances,
        missing,
        failed,
    })
}

pub fn run(cfg: &RunConfig, reference: &Path, generated: &Path, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let eval = evaluate_dirs(cfg, reference, generated)?;
    let json = serde_json::to_string_pretty(&eval)? + "\n";
    match out {
        Some(path) => {
            layout::write_file(path, json.as_bytes())?;
            let m = &eval.mean;
            println!(
                "evaluate: {} pairs, {} missing, {} failed; mean mcd {:.4} dB, logf0 rmse {:.4}, mae {:.4}, vuv {:.4}, cosine {:.4} -> {}",
                eval.utterances.len(),
                eval.missing.len(),
                eval.failed.len(),
                m.mcd_db,
                m.logf0_rmse,
                m.mel_mae,
                m.vuv_accuracy,
                m.cosine_similarity,
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(())
}

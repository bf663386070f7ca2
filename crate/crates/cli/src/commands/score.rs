//! `score build`: recordings plus alignments to phrase recordings and a
//! score file.

use std::path::Path;

use anyhow::Context;
use svs_core::audio::{read_wav, write_wav};
use svs_core::score::{
    build_score, extract_f0_autocorr, interpolate_unvoiced, parse_alignment, segment_on_silence, syllables, vocab,
    write_scores, AlignedPhone, MusicScore, PitchConfig, PitchTrack, SilenceConfig,
};
use svs_core::{Error, SAMPLE_RATE};

use crate::config::RunConfig;
use crate::layout::{self, no_utterances};
use crate::{input, pool, InputError};

/// One phrase cut from a recording.
#[derive(Debug, Clone)]
pub struct Phrase {
    pub score: MusicScore,
    pub wave: Vec<f64>,
}

fn micro(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Pitch track of a phrase with unvoiced gaps filled. A phrase without any
/// voiced frame keeps its raw track and becomes all rests.
pub fn phrase_track(wave: &[f64]) -> svs_core::Result<PitchTrack> {
    let raw = extract_f0_autocorr(wave, &PitchConfig::default())?;
    match interpolate_unvoiced(&raw) {
        Err(Error::NoVoicedFrames) => Ok(raw),
        other => other,
    }
}

/// Lyric line built from the phones: one word per syllable.
fn syllable_text(phones: &[AlignedPhone]) -> String {
    syllables(phones)
        .into_iter()
        .map(|(_, r)| {
            phones[r]
                .iter()
                .filter(|p| p.phone != vocab::SILENCE)
                .map(|p| p.phone.as_str())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits one recording into phrases and builds their scores.
///
/// Each silence-delimited span takes the phones whose midpoints fall inside
/// it, and the phrase is cut from the first phone's start to the last
/// phone's end. Lines of `<stem>.txt` are used as lyrics when there is one
/// per phrase; otherwise the lyric is spelled from the phones.
pub fn build_phrases(cfg: &RunConfig, stem: &str) -> anyhow::Result<Vec<Phrase>> {
    let wav_path = cfg.paths.audio_dir.join(format!("{stem}.wav"));
    let tsv_path = cfg.paths.alignment_dir.join(format!("{stem}.tsv"));
    let txt_path = cfg.paths.alignment_dir.join(format!("{stem}.txt"));
    let wave = input(read_wav(&wav_path), wav_path.display())?;
    let alignment = std::fs::read_to_string(&tsv_path)
        .map_err(|e| InputError(format!("cannot read alignment {}: {e}", tsv_path.display())))?;
    let phones = input(parse_alignment(&alignment), tsv_path.display())?;
    let lines: Vec<String> = match std::fs::read_to_string(&txt_path) {
        Ok(t) => t
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        Err(_) => Vec::new(),
    };

    let spans = input(segment_on_silence(&wave, &SilenceConfig::default()), wav_path.display())?;
    let groups: Vec<Vec<AlignedPhone>> = spans
        .iter()
        .map(|&(s, e)| {
            phones
                .iter()
                .filter(|p| {
                    let mid = 0.5 * (p.start + p.end);
                    mid >= s && mid < e
                })
                .cloned()
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect();

    let sr = SAMPLE_RATE as f64;
    let mut out = Vec::with_capacity(groups.len());
    for (k, group) in groups.iter().enumerate() {
        let utt = format!("{stem}_{k:03}");
        let start = group[0].start;
        let end = group[group.len() - 1].end;
        let a = ((start * sr).round() as usize).min(wave.len());
        let b = ((end * sr).round() as usize).min(wave.len());
        let wave = wave[a..b].to_vec();
        let local: Vec<AlignedPhone> = group
            .iter()
            .map(|p| AlignedPhone {
                start: micro(p.start - start),
                end: micro(p.end - start),
                ..p.clone()
            })
            .collect();
        let text = if lines.len() == groups.len() {
            lines[k].clone()
        } else {
            syllable_text(&local)
        };
        let where_ = || format!("{} phrase {k} ({start:.3}-{end:.3} s)", wav_path.display());
        let track = input(phrase_track(&wave), where_())?;
        let score = input(build_score(&local, &text, &track, &utt), where_())?;
        out.push(Phrase { score, wave });
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<()> {
    let stems = layout::stems(&cfg.paths.audio_dir, "wav")?;
    if stems.is_empty() {
        return Err(no_utterances());
    }
    let per_file = pool::map_ordered(cfg.workers, &stems, |stem| build_phrases(cfg, stem))?;
    let phrases: Vec<Phrase> = per_file.into_iter().flatten().collect();
    if phrases.is_empty() {
        return Err(no_utterances());
    }
    layout::create_dir(&cfg.paths.segment_dir)?;
    for p in &phrases {
        let path = layout::segment_wav(cfg, &p.score.utterance_id);
        write_wav(&path, &p.wave).with_context(|| format!("writing {}", path.display()))?;
    }
    let scores: Vec<MusicScore> = phrases.into_iter().map(|p| p.score).collect();
    layout::write_file(&cfg.paths.score_file, &write_scores(&scores)?)?;
    let total: f64 = scores.iter().map(MusicScore::total_duration).sum();
    let slurs: usize = scores
        .iter()
        .map(|s| s.slur_flags.iter().filter(|&&f| f == 1).count())
        .sum();
    println!(
        "score build: {} recordings, {} phrases, {slurs} slurs, total duration {total:.3} s -> {}",
        stems.len(),
        scores.len(),
        display(&cfg.paths.score_file)
    );
    Ok(())
}

pub(crate) fn display(p: &Path) -> String {
    p.display().to_string()
}

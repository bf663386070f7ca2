//! Turning a music score and its audio into network inputs: row-level
//! token embeddings, frame expansion and the two pooled audio priors.

use super::embed::{pseudo_embedding, EmbeddingKind, PHONE_DIM, WORD_DIM};
use super::nets::{ContentInputs, REST_TOKEN};
use super::Tensor;
use crate::features::{MelConfig, MelSpectrogram};
use crate::score::{hz_to_midi, vocab, MusicScore, Note, PitchTrack};
use crate::{Error, Result, SAMPLE_RATE};

pub fn note_token(note: Note) -> usize {
    match note {
        Note::Rest => REST_TOKEN,
        Note::Midi(n) => n as usize,
    }
}

/// Score row of every mel frame, assigning each frame by its centre time.
/// Frames past the last row stay on the last row.
pub fn frame_rows(durations: &[f64], n_frames: usize, cfg: &MelConfig) -> Result<Vec<usize>> {
    if durations.is_empty() {
        return Err(Error::Empty("score rows"));
    }
    let mut ends = Vec::with_capacity(durations.len());
    let mut acc = 0.0;
    for d in durations {
        acc += d;
        ends.push(acc);
    }
    let sr = SAMPLE_RATE as f64;
    let mut row = 0;
    Ok((0..n_frames)
        .map(|f| {
            let centre = (f * cfg.hop + cfg.fft_size / 2) as f64 / sr;
            while row + 1 < ends.len() && centre >= ends[row] {
                row += 1;
            }
            row
        })
        .collect())
}

/// Lyric tokens: whitespace-separated words when the text has whitespace,
/// otherwise one token per character.
pub fn text_tokens(text: &str) -> Vec<String> {
    if text.split_whitespace().count() > 1 {
        text.split_whitespace().map(str::to_string).collect()
    } else {
        text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    }
}

/// Word index of every row, `None` for silence rows.
///
/// A word is an optional consonant followed by a vowel; slur rows continue
/// the previous word and a vowel directly after a consonant joins it.
pub fn word_groups(score: &MusicScore) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(score.len());
    let mut count = 0usize;
    let mut open_consonant = false;
    for (phone, &slur) in score.phones.iter().zip(&score.slur_flags) {
        if phone == vocab::SILENCE {
            out.push(None);
            open_consonant = false;
            continue;
        }
        let continues =
            slur == 1 && out.last().is_some_and(Option::is_some) || vocab::is_vowel(phone) && open_consonant;
        if !continues {
            count += 1;
        }
        out.push(Some(count - 1));
        open_consonant = !vocab::is_vowel(phone) && slur == 0;
    }
    out
}

fn rows_tensor(rows: Vec<Vec<f64>>, dim: usize) -> Result<Tensor> {
    let n = rows.len();
    Tensor::matrix(n, dim, rows.into_iter().flatten().collect())
}

/// Per-row word embeddings. Rows take the embedding of their lyric token
/// when the token count matches the word count (with or without silence
/// rows); otherwise every row gets the mean of all token embeddings.
pub fn word_rows(score: &MusicScore, seed: u64) -> Result<Tensor> {
    let embed = |key: &str| pseudo_embedding(EmbeddingKind::Word, key, seed);
    let tokens = text_tokens(&score.text);
    let groups = word_groups(score);
    let words = groups.iter().flatten().max().map_or(0, |m| m + 1);
    let silences = groups.iter().filter(|g| g.is_none()).count();
    let rows: Vec<Vec<f64>> = if !tokens.is_empty() && tokens.len() == words {
        groups
            .iter()
            .map(|g| match g {
                Some(w) => embed(&tokens[*w]),
                None => embed(vocab::SILENCE),
            })
            .collect()
    } else if !tokens.is_empty() && tokens.len() == words + silences {
        // silence rows carry their own token in the text
        let mut next = 0usize;
        let mut last_word = None;
        let mut idx = Vec::with_capacity(groups.len());
        for g in &groups {
            match g {
                Some(w) if last_word == Some(*w) => idx.push(next - 1),
                Some(w) => {
                    last_word = Some(*w);
                    idx.push(next);
                    next += 1;
                }
                None => {
                    last_word = None;
                    idx.push(next);
                    next += 1;
                }
            }
        }
        idx.into_iter().map(|i| embed(&tokens[i])).collect()
    } else {
        let all: Vec<Vec<f64>> = if tokens.is_empty() {
            vec![embed(&score.text)]
        } else {
            tokens.iter().map(|t| embed(t)).collect()
        };
        let mean: Vec<f64> = (0..WORD_DIM)
            .map(|j| all.iter().map(|v| v[j]).sum::<f64>() / all.len() as f64)
            .collect();
        vec![mean; score.len()]
    };
    rows_tensor(rows, WORD_DIM)
}

pub fn phone_rows(score: &MusicScore, seed: u64) -> Result<Tensor> {
    let rows = score
        .phones
        .iter()
        .map(|p| pseudo_embedding(EmbeddingKind::Phone, p, seed))
        .collect();
    rows_tensor(rows, PHONE_DIM)
}

/// Assembles [`ContentInputs`] from a score and explicit row embeddings.
pub fn content_inputs_with(
    score: &MusicScore,
    n_frames: usize,
    cfg: &MelConfig,
    words: Tensor,
    phones: Tensor,
) -> Result<ContentInputs> {
    let inputs = ContentInputs {
        words,
        phones,
        notes: score.notes.iter().map(|&n| note_token(n)).collect(),
        slurs: score.slur_flags.iter().map(|&s| s as usize).collect(),
        frame_rows: frame_rows(&score.phone_durations, n_frames, cfg)?,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// [`ContentInputs`] with stand-in word and phone embeddings.
pub fn content_inputs(score: &MusicScore, n_frames: usize, cfg: &MelConfig, seed: u64) -> Result<ContentInputs> {
    content_inputs_with(score, n_frames, cfg, word_rows(score, seed)?, phone_rows(score, seed)?)
}

/// Key of the music prior: the rounded median MIDI pitch of voiced frames.
pub fn mert_key(track: &PitchTrack) -> String {
    let mut midi: Vec<f64> = track
        .f0_hz
        .iter()
        .zip(&track.voiced)
        .filter(|(f, v)| **v && **f > 0.0)
        .filter_map(|(f, _)| hz_to_midi(*f).ok())
        .collect();
    if midi.is_empty() {
        return "midi:none".into();
    }
    midi.sort_by(f64::total_cmp);
    format!("midi:{}", midi[midi.len() / 2].round() as i64)
}

/// Key of the content prior: the band with the largest mean log-mel value.
pub fn vec_key(mel: &MelSpectrogram) -> String {
    let mut best = (0usize, f64::NEG_INFINITY);
    for b in 0..mel.n_mels {
        let m = mel.frames().map(|f| f[b]).sum::<f64>() / mel.n_frames.max(1) as f64;
        if m > best.1 {
            best = (b, m);
        }
    }
    format!("band:{}", best.0)
}

/// The pooled 1024-dim music and content priors of one recording.
pub fn prior_embeddings(track: &PitchTrack, mel: &MelSpectrogram, seed: u64) -> (Vec<f64>, Vec<f64>) {
    (
        pseudo_embedding(EmbeddingKind::Mert, &mert_key(track), seed),
        pseudo_embedding(EmbeddingKind::Vec, &vec_key(mel), seed),
    )
}

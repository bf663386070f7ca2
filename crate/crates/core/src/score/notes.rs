use std::fmt;

use super::{PitchTrack, SLUR_BLOCK_SECONDS};
use crate::{Error, Result};

/// A score note: an integer MIDI number or a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Note {
    Rest,
    Midi(u8),
}

impl Note {
    pub const REST_TOKEN: &'static str = "rest";

    pub fn midi(self) -> Option<u8> {
        match self {
            Note::Rest => None,
            Note::Midi(m) => Some(m),
        }
    }
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Note::Rest => f.write_str(Self::REST_TOKEN),
            Note::Midi(m) => write!(f, "{m}"),
        }
    }
}

/// A syllable span with its quantized note and, when longer than 200 ms,
/// its per-block notes and slur flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SyllableSegment {
    pub syllable_id: u32,
    pub start: f64,
    pub end: f64,
    pub midi_note: Note,
    pub slur_subsegments: Vec<(Note, u8)>,
}

impl SyllableSegment {
    pub fn new(syllable_id: u32, start: f64, end: f64) -> Self {
        Self {
            syllable_id,
            start,
            end,
            midi_note: Note::Rest,
            slur_subsegments: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Real-valued MIDI number of a frequency: `69 + 12 log2(f / 440)`.
pub fn hz_to_midi(f0: f64) -> Result<f64> {
    if !f0.is_finite() || f0 <= 0.0 {
        return Err(Error::invalid(format!("frequency must be positive, got {f0}")));
    }
    Ok(69.0 + 12.0 * (f0 / 440.0).log2())
}

fn quantize_midi(f0: f64) -> Option<u8> {
    hz_to_midi(f0).ok().map(|m| m.round().clamp(0.0, 127.0) as u8)
}

/// Frame index range `[first, last)` covering `[start, end)` on the track grid.
pub(crate) fn frame_range(track: &PitchTrack, start: f64, end: f64) -> Result<(usize, usize)> {
    if end.is_nan() || start.is_nan() || end <= start {
        return Err(Error::invalid(format!("span end {end} must exceed start {start}")));
    }
    let hop = track.hop_seconds;
    let span_end = track.len() as f64 * hop;
    if start < -1e-9 || end > span_end + hop * 0.5 {
        return Err(Error::invalid(format!(
            "span [{start:.6}, {end:.6}) outside pitch track [0, {span_end:.6})"
        )));
    }
    let first = ((start / hop).round().max(0.0) as usize).min(track.len());
    let last = ((end / hop).round() as usize).min(track.len());
    Ok((first, last.max(first)))
}

fn mode_of_frames(track: &PitchTrack, first: usize, last: usize) -> Note {
    let mut counts = [0usize; 128];
    for &f in &track.f0_hz[first..last] {
        if let Some(m) = quantize_midi(f) {
            counts[m as usize] += 1;
        }
    }
    // ties go to the lower note
    let (best, count) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (m, &c)| if c > acc.1 { (m, c) } else { acc });
    if count == 0 {
        Note::Rest
    } else {
        Note::Midi(best as u8)
    }
}

/// Most frequent nearest-integer MIDI value over the frames of `[start, end)`.
///
/// Frames with `f0_hz > 0` take part, so gaps filled by interpolation count as
/// pitched. A span with no pitched frame is a rest; ties go to the lower note.
pub fn syllable_midi(track: &PitchTrack, start: f64, end: f64) -> Result<Note> {
    let (first, last) = frame_range(track, start, end)?;
    Ok(mode_of_frames(track, first, last))
}

/// Splits a syllable into consecutive 200 ms blocks and flags note changes.
///
/// A trailing remainder longer than half a block is kept as its own block,
/// otherwise it is merged into the previous one. Syllables no longer than one
/// block yield a single unflagged entry.
pub fn detect_slurs(track: &PitchTrack, syllable: &SyllableSegment) -> Result<Vec<(Note, u8)>> {
    Ok(slur_blocks(track, syllable)?
        .into_iter()
        .map(|(_, _, note, flag)| (note, flag))
        .collect())
}

/// Blocks as `(start, end, note, slur_flag)` in seconds.
pub(crate) fn slur_blocks(track: &PitchTrack, syllable: &SyllableSegment) -> Result<Vec<(f64, f64, Note, u8)>> {
    let (first, last) = frame_range(track, syllable.start, syllable.end)?;
    let block = (SLUR_BLOCK_SECONDS / track.hop_seconds).round() as usize;
    let frames = last - first;
    if frames <= block {
        let note = mode_of_frames(track, first, last);
        return Ok(vec![(syllable.start, syllable.end, note, 0)]);
    }
    let mut count = frames / block;
    if frames % block > block / 2 {
        count += 1;
    }
    let mut out: Vec<(f64, f64, Note, u8)> = Vec::with_capacity(count);
    for k in 0..count {
        let f0 = first + k * block;
        let f1 = if k + 1 == count { last } else { f0 + block };
        let start = syllable.start + k as f64 * SLUR_BLOCK_SECONDS;
        let end = if k + 1 == count {
            syllable.end
        } else {
            syllable.start + (k + 1) as f64 * SLUR_BLOCK_SECONDS
        };
        let note = mode_of_frames(track, f0, f1);
        let flag = match (out.last(), note) {
            (Some(&(_, _, Note::Midi(prev), _)), Note::Midi(cur)) if prev != cur => 1,
            _ => 0,
        };
        out.push((start, end, note, flag));
    }
    Ok(out)
}

//! The pipe-separated Opencpop score line:
//! `utt_id|text|phones|notes|note_durs|phone_durs|slurs`.

use super::{vocab, Note};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MusicScore {
    pub utterance_id: String,
    pub text: String,
    pub phones: Vec<String>,
    pub notes: Vec<Note>,
    pub note_durations: Vec<f64>,
    pub phone_durations: Vec<f64>,
    pub slur_flags: Vec<u8>,
}

impl MusicScore {
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.phone_durations.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.phones.len();
        let lens = [
            ("notes", self.notes.len()),
            ("note_durations", self.note_durations.len()),
            ("phone_durations", self.phone_durations.len()),
            ("slur_flags", self.slur_flags.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::invalid(format!(
                    "field length mismatch: {n} phones but {len} {name}"
                )));
            }
        }
        if self.utterance_id.is_empty() || has_reserved(&self.utterance_id) || has_reserved(&self.text) {
            return Err(Error::invalid("utterance id or text contains '|' or a newline"));
        }
        if let Some(p) = self.phones.iter().find(|p| vocab::phone_id(p).is_none()) {
            return Err(Error::invalid(format!("unknown phone {p:?}")));
        }
        if self
            .note_durations
            .iter()
            .chain(&self.phone_durations)
            .any(|d| !d.is_finite() || *d <= 0.0)
        {
            return Err(Error::invalid("durations must be positive"));
        }
        if self.slur_flags.iter().any(|&s| s > 1) {
            return Err(Error::invalid("slur flags must be 0 or 1"));
        }
        Ok(())
    }
}

fn has_reserved(s: &str) -> bool {
    s.contains('|') || s.contains('\n') || s.contains('\r')
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(" ")
}

/// Serializes one score as a single LF-terminated line.
pub fn write_score(score: &MusicScore) -> Result<Vec<u8>> {
    score.validate()?;
    let line = format!(
        "{}|{}|{}|{}|{}|{}|{}\n",
        score.utterance_id,
        score.text,
        score.phones.join(" "),
        join(&score.notes, |n| n.to_string()),
        join(&score.note_durations, |d| format!("{d:.6}")),
        join(&score.phone_durations, |d| format!("{d:.6}")),
        join(&score.slur_flags, |s| s.to_string()),
    );
    Ok(line.into_bytes())
}

pub fn write_scores(scores: &[MusicScore]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for s in scores {
        out.extend(write_score(s)?);
    }
    Ok(out)
}

/// Parses a single score line (trailing newline optional).
pub fn parse_score(bytes: &[u8]) -> Result<MusicScore> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(1, "line", e.to_string()))?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    if line.contains('\n') {
        return Err(Error::parse(2, "line", "expected a single score line"));
    }
    parse_line(line, 1)
}

/// Parses a score file with one utterance per line; blank lines are skipped.
pub fn parse_scores(bytes: &[u8]) -> Result<Vec<MusicScore>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(1, "line", e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

fn parse_line(line: &str, n: usize) -> Result<MusicScore> {
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 7 {
        return Err(Error::parse(
            n,
            "line",
            format!("expected 7 '|'-separated fields, found {}", fields.len()),
        ));
    }
    let utterance_id = fields[0].to_string();
    if utterance_id.is_empty() {
        return Err(Error::parse(n, "utt_id", "empty utterance id"));
    }
    let tokens = |s: &'_ str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let phones = tokens(fields[2]);
    for p in &phones {
        if vocab::phone_id(p).is_none() {
            return Err(Error::parse(n, "phones", format!("unknown phone {p:?}")));
        }
    }
    let notes = fields[3]
        .split_whitespace()
        .map(|t| parse_note(t).ok_or_else(|| Error::parse(n, "notes", format!("invalid note {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let durations = |field: &str, s: &str| {
        s.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|d| *d > 0.0 && d.is_finite())
                    .ok_or_else(|| Error::parse(n, field, format!("invalid duration {t:?}")))
            })
            .collect::<Result<Vec<_>>>()
    };
    let note_durations = durations("note_durations", fields[4])?;
    let phone_durations = durations("phone_durations", fields[5])?;
    let slur_flags = fields[6]
        .split_whitespace()
        .map(|t| match t {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(Error::parse(n, "slur_flags", format!("invalid slur flag {t:?}"))),
        })
        .collect::<Result<Vec<u8>>>()?;

    let counts = [
        ("notes", notes.len()),
        ("note_durations", note_durations.len()),
        ("phone_durations", phone_durations.len()),
        ("slur_flags", slur_flags.len()),
    ];
    for (field, len) in counts {
        if len != phones.len() {
            return Err(Error::parse(
                n,
                field,
                format!("field length mismatch: {} phones but {len} {field}", phones.len()),
            ));
        }
    }
    Ok(MusicScore {
        utterance_id,
        text: fields[1].to_string(),
        phones,
        notes,
        note_durations,
        phone_durations,
        slur_flags,
    })
}

fn parse_note(token: &str) -> Option<Note> {
    if token == Note::REST_TOKEN {
        return Some(Note::Rest);
    }
    token.parse::<u8>().ok().filter(|m| *m <= 127).map(Note::Midi)
}

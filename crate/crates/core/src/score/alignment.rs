use super::{vocab, SyllableSegment};
use crate::{Error, Result};

/// One aligned phone: `phone<TAB>start<TAB>end<TAB>syllable_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPhone {
    pub phone: String,
    pub start: f64,
    pub end: f64,
    pub syllable_id: u32,
}

/// Parses a tab-separated phone alignment and checks ordering, vocabulary
/// and syllable contiguity.
pub fn parse_alignment(text: &str) -> Result<Vec<AlignedPhone>> {
    let mut phones: Vec<AlignedPhone> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                line,
                "line",
                format!("expected 4 tab-separated fields, found {}", cols.len()),
            ));
        }
        let phone = cols[0].trim();
        if vocab::phone_id(phone).is_none() {
            return Err(Error::parse(line, "phone", format!("unknown phone {phone:?}")));
        }
        let num = |field: &str, s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, field, format!("not a number: {s:?}")))
        };
        let start = num("start", cols[1])?;
        let end = num("end", cols[2])?;
        let syllable_id = cols[3]
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::parse(line, "syllable_id", format!("not an integer: {:?}", cols[3])))?;
        if end <= start || start < 0.0 {
            return Err(Error::parse(line, "end", "phone must have end > start >= 0"));
        }
        if let Some(prev) = phones.last() {
            if start < prev.end - 1e-9 {
                return Err(Error::parse(line, "start", "phones overlap or are out of order"));
            }
            if syllable_id != prev.syllable_id && phones.iter().any(|p| p.syllable_id == syllable_id) {
                return Err(Error::parse(line, "syllable_id", "syllable phones are not contiguous"));
            }
        }
        phones.push(AlignedPhone {
            phone: phone.to_string(),
            start,
            end,
            syllable_id,
        });
    }
    Ok(phones)
}

pub fn write_alignment(phones: &[AlignedPhone]) -> String {
    phones
        .iter()
        .map(|p| format!("{}\t{:.6}\t{:.6}\t{}\n", p.phone, p.start, p.end, p.syllable_id))
        .collect()
}

/// Merges consecutive phones sharing a syllable id into syllable spans.
pub fn syllables(phones: &[AlignedPhone]) -> Vec<(SyllableSegment, std::ops::Range<usize>)> {
    let mut out: Vec<(SyllableSegment, std::ops::Range<usize>)> = Vec::new();
    for (i, p) in phones.iter().enumerate() {
        match out.last_mut() {
            Some((syl, range)) if syl.syllable_id == p.syllable_id => {
                syl.end = p.end;
                range.end = i + 1;
            }
            _ => out.push((SyllableSegment::new(p.syllable_id, p.start, p.end), i..i + 1)),
        }
    }
    out
}

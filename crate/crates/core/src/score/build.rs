use super::alignment::syllables;
use super::notes::{frame_range, slur_blocks};
use super::{vocab, AlignedPhone, MusicScore, Note, PitchTrack};
use crate::{Error, Result};

fn micro(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Builds the per-phone score rows for one phrase.
///
/// Every phone becomes a row carrying its syllable's note. A syllable longer
/// than 200 ms whose blocks change note gets one extra row per change that
/// repeats the syllable's final phone with slur flag 1; the final phone's
/// duration is split across those rows. Blocks starting before the final
/// phone cannot be represented that way and stay with the first row.
/// `SP` phones and pitchless syllables are rests.
pub fn build_score(phones: &[AlignedPhone], text: &str, track: &PitchTrack, utterance_id: &str) -> Result<MusicScore> {
    if phones.is_empty() {
        return Err(Error::Empty("phones"));
    }
    let mut score = MusicScore {
        utterance_id: utterance_id.to_string(),
        text: text.to_string(),
        phones: Vec::new(),
        notes: Vec::new(),
        note_durations: Vec::new(),
        phone_durations: Vec::new(),
        slur_flags: Vec::new(),
    };
    let mut push = |phone: &str, note: Note, note_dur: f64, phone_dur: f64, slur: u8| {
        score.phones.push(phone.to_string());
        score.notes.push(note);
        score.note_durations.push(micro(note_dur));
        score.phone_durations.push(micro(phone_dur));
        score.slur_flags.push(slur);
    };

    for (syllable, range) in syllables(phones) {
        let members = &phones[range];
        for p in members {
            frame_range(track, p.start, p.end)
                .map_err(|e| Error::invalid(format!("phone {:?} at {:.6}: {e}", p.phone, p.start)))?;
        }
        if members.iter().all(|p| p.phone == vocab::SILENCE) {
            for p in members {
                push(&p.phone, Note::Rest, syllable.duration(), p.end - p.start, 0);
            }
            continue;
        }

        let blocks = slur_blocks(track, &syllable)?;
        let last = members.last().expect("syllable has phones");
        // runs of blocks that share a note; a new run starts at each slur
        let mut runs: Vec<(f64, f64, Note)> = Vec::new();
        for &(start, end, note, flag) in &blocks {
            match runs.last_mut() {
                Some(run) if flag == 0 || start < last.start + 1e-9 => run.1 = end,
                _ => runs.push((start, end, note)),
            }
        }
        let (_, first_end, first_note) = runs[0];
        let first_dur = first_end - syllable.start;
        for p in &members[..members.len() - 1] {
            push(&p.phone, first_note, first_dur, p.end - p.start, 0);
        }
        push(&last.phone, first_note, first_dur, first_end - last.start, 0);
        for &(start, end, note) in &runs[1..] {
            push(&last.phone, note, end - start, end - start, 1);
        }
    }
    score.validate()?;
    Ok(score)
}

//! From a vocal recording and its phone alignment to a music score.
//!
//! The pipeline segments a recording on long silences, tracks F0 on a 10 ms
//! grid, fills unvoiced gaps inside each phrase, assigns every syllable the
//! mode of its quantized MIDI values and marks 200 ms sub-segments whose note
//! changes as slurs. The result is written in the Opencpop score layout.

mod alignment;
mod build;
mod format;
mod notes;
mod pitch;
mod segment;
pub mod vocab;

pub use alignment::{parse_alignment, syllables, write_alignment, AlignedPhone};
pub use build::build_score;
pub use format::{parse_score, parse_scores, write_score, write_scores, MusicScore};
pub use notes::{detect_slurs, hz_to_midi, syllable_midi, Note, SyllableSegment};
pub use pitch::{extract_f0_autocorr, interpolate_unvoiced, PitchConfig, PitchTrack};
pub use segment::{segment_on_silence, SilenceConfig};

/// Spacing of the pitch grid in seconds.
pub const PITCH_HOP_SECONDS: f64 = 0.010;

/// Sub-segment length used for slur detection, in seconds.
pub const SLUR_BLOCK_SECONDS: f64 = 0.200;

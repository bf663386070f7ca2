use crate::audio::rms_dbfs;
use crate::{Error, Result, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceConfig {
    /// Frames with RMS below this level (dBFS) count as silent.
    pub threshold_dbfs: f64,
    /// Silences at least this long split phrases, in seconds.
    pub min_gap: f64,
    /// Energy frame length in seconds.
    pub frame_seconds: f64,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        Self {
            threshold_dbfs: -40.0,
            min_gap: 0.5,
            frame_seconds: 0.010,
        }
    }
}

/// Splits a recording into phrase spans `(start, end)` in seconds, separated
/// by silences of at least `min_gap`.
///
/// Leading and trailing silence is excluded. An all-silent recording yields no
/// spans.
pub fn segment_on_silence(wave: &[f64], cfg: &SilenceConfig) -> Result<Vec<(f64, f64)>> {
    if wave.is_empty() {
        return Err(Error::Empty("wave"));
    }
    if cfg.min_gap.is_nan() || cfg.min_gap <= 0.0 || cfg.frame_seconds.is_nan() || cfg.frame_seconds <= 0.0 {
        return Err(Error::invalid("min_gap and frame length must be positive"));
    }
    let sr = SAMPLE_RATE as f64;
    let frame = ((cfg.frame_seconds * sr).round() as usize).max(1);
    let loud: Vec<bool> = wave.chunks(frame).map(|c| rms_dbfs(c) >= cfg.threshold_dbfs).collect();
    let min_gap_frames = (cfg.min_gap / cfg.frame_seconds - 1e-9).ceil() as usize;

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < loud.len() {
        if !loud[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < loud.len() && loud[i] {
            i += 1;
        }
        match runs.last_mut() {
            Some(prev) if start - prev.1 < min_gap_frames => prev.1 = i,
            _ => runs.push((start, i)),
        }
    }
    let duration = wave.len() as f64 / sr;
    Ok(runs
        .into_iter()
        .map(|(a, b)| {
            let start = (a * frame) as f64 / sr;
            let end = ((b * frame) as f64 / sr).min(duration);
            (start, end)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn concat(parts: &[Vec<f64>]) -> Vec<f64> {
        parts.concat()
    }

    #[test]
    fn long_gap_splits() {
        let w = concat(&[
            synth::sine(220.0, 0.5, 1.0),
            synth::silence(0.6),
            synth::sine(220.0, 0.5, 1.0),
        ]);
        let spans = segment_on_silence(&w, &SilenceConfig::default()).unwrap();
        assert_eq!(spans.len(), 2);
        assert!((spans[0].0).abs() < 1e-9 && (spans[0].1 - 1.0).abs() <= 0.01);
        assert!((spans[1].0 - 1.6).abs() <= 0.01 && (spans[1].1 - 2.6).abs() <= 0.01);
        // the gap itself is quiet for at least min_gap
        let gap = &w[(spans[0].1 * 16_000.0) as usize..(spans[1].0 * 16_000.0) as usize];
        assert!(gap.len() as f64 / 16_000.0 >= 0.5);
        assert!(rms_dbfs(gap) < -40.0);
    }

    #[test]
    fn short_gap_does_not_split() {
        let w = concat(&[
            synth::sine(220.0, 0.5, 1.0),
            synth::silence(0.3),
            synth::sine(220.0, 0.5, 1.0),
        ]);
        assert_eq!(segment_on_silence(&w, &SilenceConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn silence_has_no_spans() {
        assert!(segment_on_silence(&[0.0; 8000], &SilenceConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_wave_is_an_error() {
        assert!(segment_on_silence(&[], &SilenceConfig::default()).is_err());
    }
}

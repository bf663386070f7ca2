//! Autocorrelation F0 tracking on a 10 ms grid.

use crate::{Error, Result, SAMPLE_RATE};

use super::PITCH_HOP_SECONDS;

/// F0 contour with per-frame voicing decisions.
///
/// Frame `i` is centred at `i * hop_seconds`. Unvoiced frames carry
/// `f0_hz == 0` until [`interpolate_unvoiced`] fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub hop_seconds: f64,
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl PitchTrack {
    pub fn new(f0_hz: Vec<f64>, voiced: Vec<bool>) -> Result<Self> {
        if f0_hz.len() != voiced.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![f0_hz.len()],
                found: vec![voiced.len()],
            });
        }
        Ok(Self {
            hop_seconds: PITCH_HOP_SECONDS,
            f0_hz,
            voiced,
        })
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 * self.hop_seconds
    }

    /// Frames `[start, end)` as a new track whose first frame is at time 0.
    pub fn slice(&self, start: usize, end: usize) -> PitchTrack {
        PitchTrack {
            hop_seconds: self.hop_seconds,
            f0_hz: self.f0_hz[start..end].to_vec(),
            voiced: self.voiced[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    pub window_seconds: f64,
    pub hop_seconds: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this (dBFS) are unvoiced regardless of periodicity.
    pub silence_dbfs: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: 60.0,
            max_hz: 1000.0,
            window_seconds: 0.040,
            hop_seconds: PITCH_HOP_SECONDS,
            voicing_threshold: 0.45,
            silence_dbfs: -70.0,
        }
    }
}

/// Tracks F0 by picking the first strong peak of the normalized
/// autocorrelation in each window.
///
/// Windows are centred on the frame times and zero-padded at the signal edges.
/// The lag is refined by fitting a cosine through the peak and its two
/// neighbours, which is exact for a sinusoidal autocorrelation.
pub fn extract_f0_autocorr(wave: &[f64], cfg: &PitchConfig) -> Result<PitchTrack> {
    let sr = SAMPLE_RATE as f64;
    let win = (cfg.window_seconds * sr).round() as usize;
    let hop = (cfg.hop_seconds * sr).round() as usize;
    if !(cfg.min_hz > 0.0 && cfg.min_hz < cfg.max_hz) || hop == 0 {
        return Err(Error::invalid("pitch search range or hop is invalid"));
    }
    let min_lag = (sr / cfg.max_hz).floor().max(2.0) as usize;
    let max_lag = (sr / cfg.min_hz).ceil() as usize;
    if win < 2 * max_lag {
        return Err(Error::invalid(format!(
            "window of {win} samples is shorter than two periods at {} Hz",
            cfg.min_hz
        )));
    }
    if wave.len() < win {
        return Err(Error::invalid(format!(
            "wave of {} samples is shorter than one {win}-sample window",
            wave.len()
        )));
    }

    let n_frames = wave.len().div_ceil(hop);
    let silence_ms = 10f64.powf(cfg.silence_dbfs / 10.0);
    let mut frame = vec![0.0; win];
    let mut corr = vec![0.0; max_lag + 2];
    let mut f0_hz = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);

    for i in 0..n_frames {
        let center = (i * hop) as isize;
        let begin = center - (win / 2) as isize;
        for (k, v) in frame.iter_mut().enumerate() {
            let idx = begin + k as isize;
            *v = if idx >= 0 && (idx as usize) < wave.len() {
                wave[idx as usize]
            } else {
                0.0
            };
        }
        let ms = frame.iter().map(|x| x * x).sum::<f64>() / win as f64;
        if ms <= silence_ms {
            f0_hz.push(0.0);
            voiced.push(false);
            continue;
        }
        normalized_autocorr(&frame, min_lag - 1, max_lag + 1, &mut corr);
        match pick_period(&corr, min_lag, max_lag) {
            Some((lag, strength)) if strength >= cfg.voicing_threshold => {
                let f0 = sr / lag;
                if f0 >= cfg.min_hz && f0 <= cfg.max_hz {
                    f0_hz.push(f0);
                    voiced.push(true);
                } else {
                    f0_hz.push(0.0);
                    voiced.push(false);
                }
            }
            _ => {
                f0_hz.push(0.0);
                voiced.push(false);
            }
        }
    }
    PitchTrack::new(f0_hz, voiced)
}

fn normalized_autocorr(x: &[f64], lo: usize, hi: usize, out: &mut [f64]) {
    let n = x.len();
    for lag in lo..=hi {
        let (mut cross, mut e0, mut e1) = (0.0, 0.0, 0.0);
        for i in 0..n - lag {
            let a = x[i];
            let b = x[i + lag];
            cross += a * b;
            e0 += a * a;
            e1 += b * b;
        }
        let denom = (e0 * e1).sqrt();
        out[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
    }
}

/// Returns the refined period in samples and the peak correlation.
fn pick_period(corr: &[f64], min_lag: usize, max_lag: usize) -> Option<(f64, f64)> {
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| corr[l] >= corr[l - 1] && corr[l] > corr[l + 1] && corr[l] > 0.0)
        .collect();
    let best = peaks.iter().map(|&l| corr[l]).fold(f64::NEG_INFINITY, f64::max);
    // the earliest peak close to the global best avoids sub-octave picks
    let lag = *peaks.iter().find(|&&l| corr[l] >= 0.9 * best)?;
    let (prev, mid, next) = (corr[lag - 1], corr[lag], corr[lag + 1]);
    Some((lag as f64 + refine_offset(prev, mid, next), mid))
}

fn refine_offset(prev: f64, mid: f64, next: f64) -> f64 {
    let c = (prev + next) / (2.0 * mid);
    if mid > 0.0 && c > -1.0 && c < 1.0 {
        let w = c.acos();
        let delta = ((next - prev) / (2.0 * mid * w.sin())).atan() / w;
        if delta.abs() <= 0.5 {
            return delta;
        }
    }
    let curvature = prev - 2.0 * mid + next;
    if curvature < 0.0 {
        (0.5 * (prev - next) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Fills every unvoiced frame between two voiced ones by linear
/// interpolation in Hz and holds the nearest voiced value at the edges.
///
/// Voicing flags are left untouched so that the voicing decision survives.
pub fn interpolate_unvoiced(track: &PitchTrack) -> Result<PitchTrack> {
    let anchors: Vec<usize> = (0..track.len())
        .filter(|&i| track.voiced[i] && track.f0_hz[i] > 0.0)
        .collect();
    let (&first, &last) = match (anchors.first(), anchors.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::NoVoicedFrames),
    };
    let mut f0 = track.f0_hz.clone();
    f0[..first].fill(track.f0_hz[first]);
    f0[last + 1..].fill(track.f0_hz[last]);
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (fa, fb) = (track.f0_hz[a], track.f0_hz[b]);
        for (k, v) in f0.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (k - a) as f64 / (b - a) as f64;
            *v = fa + w * (fb - fa);
        }
    }
    Ok(PitchTrack {
        hop_seconds: track.hop_seconds,
        f0_hz: f0,
        voiced: track.voiced.clone(),
    })
}

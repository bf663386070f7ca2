use super::{stft, MelConfig, MelFilterbank};
use crate::{Error, Result};

/// Row-major `n_frames x n_mels` matrix of log-mel or normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_frames: usize,
    pub n_mels: usize,
    pub data: Vec<f64>,
}

impl MelSpectrogram {
    pub fn new(n_frames: usize, n_mels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_frames * n_mels {
            return Err(Error::ShapeMismatch {
                expected: vec![n_frames, n_mels],
                found: vec![data.len()],
            });
        }
        Ok(Self { n_frames, n_mels, data })
    }

    pub fn filled(n_frames: usize, n_mels: usize, value: f64) -> Self {
        Self {
            n_frames,
            n_mels,
            data: vec![value; n_frames * n_mels],
        }
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_mels..(i + 1) * self.n_mels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_mels)
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.n_frames, self.n_mels]
    }

    /// The first `n` frames.
    pub fn truncated(&self, n: usize) -> MelSpectrogram {
        let n = n.min(self.n_frames);
        MelSpectrogram {
            n_frames: n,
            n_mels: self.n_mels,
            data: self.data[..n * self.n_mels].to_vec(),
        }
    }
}

/// Number of analysis frames for a signal of `len` samples.
pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len < fft_size {
        0
    } else {
        (len - fft_size) / hop + 1
    }
}

/// Natural-log mel amplitudes, clamped below at the configured floor.
pub fn mel_spectrogram(wave: &[f64], cfg: &MelConfig) -> Result<MelSpectrogram> {
    let fb = MelFilterbank::new(cfg)?;
    mel_spectrogram_with(wave, cfg, &fb)
}

pub(crate) fn mel_spectrogram_with(wave: &[f64], cfg: &MelConfig, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if wave.len() < cfg.fft_size {
        return Err(Error::invalid(format!(
            "wave of {} samples is shorter than one {}-sample frame",
            wave.len(),
            cfg.fft_size
        )));
    }
    let spec = stft(wave, cfg.fft_size, cfg.hop);
    let floor = cfg.log_floor();
    let mut data = Vec::with_capacity(spec.frames.len() * cfg.n_mels);
    let mut mag = vec![0.0; cfg.n_bins()];
    let mut band = vec![0.0; cfg.n_mels];
    for frame in &spec.frames {
        for (m, c) in mag.iter_mut().zip(frame) {
            *m = c.norm();
        }
        fb.apply(&mag, &mut band);
        data.extend(band.iter().map(|&a| if a > 0.0 { a.ln().max(floor) } else { floor }));
    }
    MelSpectrogram::new(spec.frames.len(), cfg.n_mels, data)
}

/// Maps `[log_floor, log_ceil]` affinely onto `[-1, 1]`, clipping outside.
pub fn normalize_mel(m: &MelSpectrogram, cfg: &MelConfig) -> MelSpectrogram {
    let (lo, hi) = (cfg.log_floor(), cfg.log_ceil());
    MelSpectrogram {
        data: m
            .data
            .iter()
            .map(|&x| (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
            .collect(),
        ..*m
    }
}

pub fn denormalize_mel(m: &MelSpectrogram, cfg: &MelConfig) -> MelSpectrogram {
    let (lo, hi) = (cfg.log_floor(), cfg.log_ceil());
    MelSpectrogram {
        data: m.data.iter().map(|&y| lo + (y + 1.0) * 0.5 * (hi - lo)).collect(),
        ..*m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn silence_is_floor() {
        let cfg = MelConfig::default();
        let m = mel_spectrogram(&vec![0.0; 4000], &cfg).unwrap();
        assert_eq!(m.n_frames, (4000 - 512) / 128 + 1);
        assert!(m.data.iter().all(|&v| v == cfg.log_floor()));
    }

    #[test]
    fn sine_peaks_in_nearest_band() {
        let cfg = MelConfig::default();
        let fb = MelFilterbank::new(&cfg).unwrap();
        let nearest = fb
            .centers()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap())
            .unwrap()
            .0;
        let m = mel_spectrogram(&synth::sine(1000.0, 0.5, 0.3), &cfg).unwrap();
        for frame in m.frames() {
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, nearest);
        }
    }

    #[test]
    fn doubling_amplitude_adds_ln2() {
        let cfg = MelConfig::default();
        let a = mel_spectrogram(&synth::sine(440.0, 0.2, 0.2), &cfg).unwrap();
        let b = mel_spectrogram(&synth::sine(440.0, 0.4, 0.2), &cfg).unwrap();
        let floor = cfg.log_floor();
        let mut checked = 0;
        for (x, y) in a.data.iter().zip(&b.data) {
            if *x > floor + 1.0 {
                assert!((y - x - std::f64::consts::LN_2).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(mel_spectrogram(&[0.0; 511], &MelConfig::default()).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        let cfg = MelConfig::default();
        let (lo, hi) = (cfg.log_floor(), cfg.log_ceil());
        let m = MelSpectrogram::new(1, 3, vec![lo, 0.5 * (lo + hi), hi]).unwrap();
        let n = normalize_mel(&m, &cfg);
        assert_eq!(n.data[0], -1.0);
        assert!(n.data[1].abs() < 1e-12);
        assert!((n.data[2] - 1.0).abs() < 1e-12);
        let clipped = normalize_mel(&MelSpectrogram::new(1, 1, vec![hi + 5.0]).unwrap(), &cfg);
        assert_eq!(clipped.data[0], 1.0);
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 512usize..6000) {
            let m = mel_spectrogram(&vec![0.01; len], &MelConfig::default()).unwrap();
            prop_assert_eq!(m.n_frames, (len - 512) / 128 + 1);
        }

        #[test]
        fn normalize_round_trip(values in prop::collection::vec(-11.0f64..4.8, 1..50)) {
            let cfg = MelConfig::default();
            let m = MelSpectrogram::new(values.len(), 1, values.clone()).unwrap();
            let back = denormalize_mel(&normalize_mel(&m, &cfg), &cfg);
            for (a, b) in back.data.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn energy_monotone_in_amplitude(a in 0.01f64..0.5, k in 1.0f64..1.9) {
            let cfg = MelConfig::default();
            let w = synth::sine(300.0, a, 0.1);
            let louder: Vec<f64> = w.iter().map(|x| x * k).collect();
            let e = |m: &MelSpectrogram| m.data.iter().map(|v| v.exp()).sum::<f64>();
            let m1 = mel_spectrogram(&w, &cfg).unwrap();
            let m2 = mel_spectrogram(&louder, &cfg).unwrap();
            prop_assert!(e(&m2) >= e(&m1));
        }
    }
}

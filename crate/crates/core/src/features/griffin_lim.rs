use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::mel::MelSpectrogram;
use super::{istft, stft, MelConfig, MelFilterbank, Spectrogram};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self {
            iterations: 32,
            seed: 0,
        }
    }
}

/// Reconstructs a waveform from a log-mel spectrogram.
///
/// Band amplitudes are spread back onto FFT bins and a phase is estimated by
/// alternating projections starting from a seeded random phase. The result
/// is trimmed by `(fft_size - hop) / 2` samples on each side so that it lasts
/// `n_frames * hop` samples.
pub fn griffin_lim(m: &MelSpectrogram, cfg: &MelConfig, gl: &GriffinLimConfig) -> Result<Vec<f64>> {
    let fb = MelFilterbank::new(cfg)?;
    let n_bins = cfg.n_bins();
    let floor = cfg.log_floor();
    let mut amp = vec![0.0; m.n_mels];
    let target: Vec<Vec<f64>> = m
        .frames()
        .map(|frame| {
            for (a, &v) in amp.iter_mut().zip(frame) {
                *a = v.max(floor).exp();
            }
            let mut mag = vec![0.0; n_bins];
            fb.spread(&amp, &mut mag);
            mag
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(gl.seed);
    let mut spec = Spectrogram {
        fft_size: cfg.fft_size,
        hop: cfg.hop,
        frames: target
            .iter()
            .map(|mag| {
                mag.iter()
                    .map(|&a| Complex64::from_polar(a, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
                    .collect()
            })
            .collect(),
    };
    let mut wave = istft(&spec);
    for _ in 0..gl.iterations {
        let est = stft(&wave, cfg.fft_size, cfg.hop);
        for ((frame, est), mag) in spec.frames.iter_mut().zip(&est.frames).zip(&target) {
            for ((c, e), &a) in frame.iter_mut().zip(est).zip(mag) {
                let norm = e.norm();
                *c = if norm > 0.0 {
                    e * (a / norm)
                } else {
                    Complex64::new(a, 0.0)
                };
            }
        }
        wave = istft(&spec);
    }
    let trim = (cfg.fft_size - cfg.hop) / 2;
    if wave.len() <= 2 * trim {
        return Ok(Vec::new());
    }
    Ok(wave[trim..wave.len() - trim].to_vec())
}

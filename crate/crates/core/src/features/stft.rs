use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex spectra, `frames x (fft_size / 2 + 1)`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub fft_size: usize,
    pub hop: usize,
    pub frames: Vec<Vec<Complex64>>,
}

impl Spectrogram {
    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|c| c.norm()).collect())
            .collect()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

/// Short-time Fourier transform without padding: frame `i` covers samples
/// `[i * hop, i * hop + fft_size)`.
pub fn stft(wave: &[f64], fft_size: usize, hop: usize) -> Spectrogram {
    let window = hann_window(fft_size);
    let n_frames = super::frame_count(wave.len(), fft_size, hop);
    let fft = plans(fft_size).forward;
    let mut buf = vec![Complex64::default(); fft_size];
    let frames = (0..n_frames)
        .map(|i| {
            let chunk = &wave[i * hop..i * hop + fft_size];
            for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&window) {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..fft_size / 2 + 1].to_vec()
        })
        .collect();
    Spectrogram { fft_size, hop, frames }
}

/// Weighted overlap-add inverse of [`stft`]. The output spans
/// `(frames - 1) * hop + fft_size` samples.
pub fn istft(spec: &Spectrogram) -> Vec<f64> {
    let n = spec.fft_size;
    let window = hann_window(n);
    if spec.frames.is_empty() {
        return Vec::new();
    }
    let len = (spec.frames.len() - 1) * spec.hop + n;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let ifft = plans(n).inverse;
    let mut buf = vec![Complex64::default(); n];
    for (i, frame) in spec.frames.iter().enumerate() {
        buf[..frame.len()].copy_from_slice(frame);
        for k in 1..n - frame.len() + 1 {
            buf[n - k] = frame[k].conj();
        }
        ifft.process(&mut buf);
        let offset = i * spec.hop;
        for (j, (&b, &w)) in buf.iter().zip(&window).enumerate() {
            out[offset + j] += b.re / n as f64 * w;
            norm[offset + j] += w * w;
        }
    }
    let floor = norm.iter().cloned().fold(0.0, f64::max) * 1e-3;
    for (o, &w) in out.iter_mut().zip(&norm) {
        *o /= w.max(floor);
    }
    out
}

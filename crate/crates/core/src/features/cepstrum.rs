use std::f64::consts::PI;

use super::MelSpectrogram;
use crate::{Error, Result};

/// Orthonormal DCT-II of each log-mel frame, returning coefficients
/// `1..=order` (c0 dropped), row-major `n_frames x order`.
pub fn mel_cepstrum(m: &MelSpectrogram, order: usize) -> Result<Vec<Vec<f64>>> {
    let n = m.n_mels;
    if order == 0 || order >= n {
        return Err(Error::invalid(format!("cepstral order {order} must be in 1..{n}")));
    }
    let scale = (2.0 / n as f64).sqrt();
    let basis: Vec<Vec<f64>> = (1..=order)
        .map(|k| {
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect();
    Ok(m.frames()
        .map(|frame| {
            basis
                .iter()
                .map(|b| b.iter().zip(frame).map(|(w, x)| w * x).sum())
                .collect()
        })
        .collect())
}

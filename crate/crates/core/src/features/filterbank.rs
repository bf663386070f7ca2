use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLE_RATE};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Lower clamp of the log-mel amplitude, in dB (maps to -1).
    pub log_floor_db: f64,
    /// Upper normalization bound, in dB (maps to +1).
    pub log_ceil_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            fft_size: 512,
            hop: 128,
            n_mels: 80,
            fmin: 30.0,
            fmax: 8000.0,
            log_floor_db: -96.0,
            log_ceil_db: 42.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!("only {SAMPLE_RATE} Hz is supported")));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return Err(Error::invalid("need 0 <= fmin < fmax <= sample_rate / 2"));
        }
        if self.log_floor_db.is_nan() || self.log_ceil_db.is_nan() || self.log_floor_db >= self.log_ceil_db {
            return Err(Error::invalid("need log_floor_db < log_ceil_db"));
        }
        if self.fft_size < 2 || self.hop == 0 || self.n_mels == 0 {
            return Err(Error::invalid("fft_size, hop and n_mels must be positive"));
        }
        Ok(())
    }

    /// Natural-log amplitude corresponding to `log_floor_db`.
    pub fn log_floor(&self) -> f64 {
        self.log_floor_db * std::f64::consts::LN_10 / 20.0
    }

    pub fn log_ceil(&self) -> f64 {
        self.log_ceil_db * std::f64::consts::LN_10 / 20.0
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Triangular filters on the HTK mel scale, each row scaled to unit sum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.n_bins();
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::invalid(format!(
                    "mel band {m} ({c:.1} Hz) covers no FFT bin; lower n_mels or raise fft_size"
                )));
            }
            row.iter_mut().for_each(|w| *w /= sum);
        }
        Ok(Self {
            n_mels: cfg.n_mels,
            n_bins,
            weights,
            centers: edges[1..=cfg.n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Center frequency of every band in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Applies the filterbank to one magnitude spectrum.
    pub fn apply(&self, magnitude: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(magnitude).map(|(w, x)| w * x).sum();
        }
    }

    /// Spreads band amplitudes back onto FFT bins, weighting each bin by the
    /// filters that cover it. Bins outside every filter get zero.
    pub fn spread(&self, mel: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (m, &a) in mel.iter().enumerate() {
                let w = self.weights[m * self.n_bins + k];
                num += w * a;
                den += w;
            }
            *o = if den > 0.0 { num / den } else { 0.0 };
        }
    }
}

//! Log-mel analysis at 16 kHz (512-sample Hann frames, 128-sample hop,
//! 80 bands), `[-1, 1]` normalization, mel cepstra and Griffin-Lim inversion.

mod cepstrum;
mod filterbank;
mod griffin_lim;
mod mel;
mod stft;

pub use cepstrum::mel_cepstrum;
pub use filterbank::{hz_to_mel, mel_to_hz, MelConfig, MelFilterbank};
pub use griffin_lim::{griffin_lim, GriffinLimConfig};
pub use mel::{denormalize_mel, frame_count, mel_spectrogram, normalize_mel, MelSpectrogram};
pub use stft::{hann_window, istft, stft, Spectrogram};

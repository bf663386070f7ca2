//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svs_core::features::{mel_spectrogram, normalize_mel, MelConfig, MelSpectrogram};
use svs_core::nn::{ContentInputs, Tensor, PHONE_DIM, WORD_DIM};
use svs_core::synth;

/// A sung `aa` vowel at 220 Hz.
pub fn voice(seconds: f64) -> Vec<f64> {
    synth::sung_phone("aa", 220.0, seconds, 0.4, 1)
}

/// Normalized mel of [`voice`].
pub fn voice_mel(seconds: f64) -> MelSpectrogram {
    let cfg = MelConfig::default();
    normalize_mel(&mel_spectrogram(&voice(seconds), &cfg).expect("mel"), &cfg)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(&[rows, cols], 1.0, &mut rng)
}

/// Content-encoder inputs with `rows` score rows spread over `frames`.
pub fn content_inputs(frames: usize, rows: usize, seed: u64) -> ContentInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ContentInputs {
        words: Tensor::randn(&[rows, WORD_DIM], 0.03, &mut rng),
        phones: Tensor::randn(&[rows, PHONE_DIM], 0.03, &mut rng),
        notes: (0..rows).map(|_| rng.gen_range(48..72)).collect(),
        slurs: (0..rows).map(|r| r % 2).collect(),
        frame_rows: (0..frames).map(|f| f * rows / frames).collect(),
    }
}

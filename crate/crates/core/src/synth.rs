//! Deterministic synthetic singing: pure tones, noise and harmonic vowels
//! with matching phone alignments.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::score::AlignedPhone;
use crate::SAMPLE_RATE;

fn samples(seconds: f64) -> usize {
    (seconds * SAMPLE_RATE as f64).round() as usize
}

pub fn sine(freq: f64, amplitude: f64, seconds: f64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    (0..samples(seconds))
        .map(|i| amplitude * (TAU * freq * i as f64 / sr).sin())
        .collect()
}

pub fn silence(seconds: f64) -> Vec<f64> {
    vec![0.0; samples(seconds)]
}

/// Gaussian white noise with the given RMS level.
pub fn white_noise(rms: f64, seconds: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, rms).expect("finite rms");
    (0..samples(seconds))
        .map(|_| normal.sample(&mut rng).clamp(-1.0, 1.0))
        .collect()
}

/// Sine whose frequency follows `segments` of `(freq, seconds)` with a
/// continuous phase.
pub fn sine_sequence(segments: &[(f64, f64)], amplitude: f64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut phase = 0.0f64;
    let mut out = Vec::new();
    for &(freq, secs) in segments {
        for _ in 0..samples(secs) {
            out.push(amplitude * phase.sin());
            phase = (phase + TAU * freq / sr) % TAU;
        }
    }
    out
}

/// Formant frequencies for the vowels and voiced consonants used by the
/// synthetic corpus.
fn formants(phone: &str) -> [f64; 3] {
    match phone {
        "a" | "aa" => [730.0, 1090.0, 2440.0],
        "i" | "ii" => [270.0, 2290.0, 3010.0],
        "u" | "uu" => [300.0, 870.0, 2240.0],
        "e" | "ee" => [530.0, 1840.0, 2480.0],
        "o" | "oo" => [570.0, 840.0, 2410.0],
        "m" => [250.0, 1200.0, 2200.0],
        "n" => [250.0, 1700.0, 2600.0],
        "l" => [360.0, 1300.0, 2700.0],
        _ => [500.0, 1500.0, 2500.0],
    }
}

/// Harmonic amplitudes for a voiced sound: a 1/k tilt shaped by three
/// resonances.
fn harmonic_weights(f0: f64, phone: &str) -> Vec<f64> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let fm = formants(phone);
    (1..)
        .map(|k| k as f64 * f0)
        .take_while(|&f| f < nyquist * 0.95)
        .enumerate()
        .map(|(k, f)| {
            let resonance: f64 = fm.iter().map(|&c| 1.0 / (1.0 + ((f - c) / 120.0).powi(2))).sum();
            (0.35 + resonance) / (k + 1) as f64
        })
        .collect()
}

/// A sung phone with constant pitch, 10 ms raised-cosine fades and a faint
/// breath noise floor.
pub fn sung_phone(phone: &str, f0: f64, seconds: f64, amplitude: f64, seed: u64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let n = samples(seconds);
    let weights = harmonic_weights(f0, phone);
    let norm: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let breath = Normal::new(0.0, 1e-3).expect("finite");
    let fade = samples(0.010).min(n / 2).max(1);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let voiced: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * (TAU * (k + 1) as f64 * f0 * t).sin())
                .sum();
            let edge = i.min(n - 1 - i);
            let env = if edge < fade {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / fade as f64).cos()
            } else {
                1.0
            };
            amplitude * env * voiced / norm + breath.sample(&mut rng)
        })
        .collect()
}

/// A synthetic recording with its alignment and lyric line.
#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub id: String,
    pub wave: Vec<f64>,
    pub phones: Vec<AlignedPhone>,
    pub text: String,
}

const CONSONANTS: [&str; 3] = ["m", "n", "l"];
const VOWELS: [&str; 5] = ["aa", "ii", "uu", "ee", "oo"];
const MELODY: [f64; 6] = [196.0, 220.0, 246.94, 261.63, 293.66, 329.63];

/// A small corpus of two-syllable phrases, each syllable a voiced consonant
/// followed by a held vowel, with `lead` seconds of silence on both sides.
pub fn toy_corpus(count: usize, lead: f64, seed: u64) -> Vec<SyntheticUtterance> {
    (0..count)
        .map(|u| {
            let mut wave = silence(lead);
            let mut phones = Vec::new();
            let mut words = Vec::new();
            let mut t = lead;
            for s in 0..2 {
                let k = u * 2 + s;
                let cons = CONSONANTS[k % CONSONANTS.len()];
                let vowel = VOWELS[(k * 2 + u) % VOWELS.len()];
                let f0 = MELODY[(k * 5 + u) % MELODY.len()];
                let cons_dur = 0.04;
                let vowel_dur = if s == 0 { 0.18 } else { 0.21 };
                for (phone, dur) in [(cons, cons_dur), (vowel, vowel_dur)] {
                    let amp = if phone == cons { 0.15 } else { 0.35 };
                    wave.extend(sung_phone(phone, f0, dur, amp, seed ^ (k as u64 * 31 + dur.to_bits())));
                    phones.push(AlignedPhone {
                        phone: phone.to_string(),
                        start: (t * 1e6).round() / 1e6,
                        end: ((t + dur) * 1e6).round() / 1e6,
                        syllable_id: s as u32,
                    });
                    t += dur;
                }
                words.push(format!("{cons}{vowel}"));
            }
            wave.extend(silence(lead));
            SyntheticUtterance {
                id: format!("toy{u:02}"),
                wave,
                phones,
                text: words.join(" "),
            }
        })
        .collect()
}

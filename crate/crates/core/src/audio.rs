//! 16-bit mono 16 kHz WAV input and output.

use std::path::Path;

use crate::{Error, Result, SAMPLE_RATE};

/// Reads a mono 16-bit PCM WAV at 16 kHz into samples in `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let reject = |reason: String| Error::AudioFormat {
        path: path.to_path_buf(),
        reason,
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(reject(format!(
            "sample rate {} Hz, expected {SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(reject(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(reject(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0).map_err(|e| wav_err(path, e)))
        .collect()
}

/// Writes samples as 16-bit mono PCM at 16 kHz, clipping to full scale.
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        writer.write_sample(quantize(s)).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Rounds a sample to the nearest 16-bit PCM code.
pub fn quantize(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Root-mean-square level in dB relative to full scale. Silence maps to `-inf`.
pub fn rms_dbfs(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let ms = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    10.0 * ms.log10()
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::file(path, io),
        other => Error::AudioFormat {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_exact_on_pcm_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..1000).map(|i| ((i - 500) * 37) as f64 / 32768.0).collect();
        write_wav(&path, &samples).unwrap();
        assert_eq!(read_wav(&path).unwrap(), samples);
    }

    #[test]
    fn other_rates_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("22050"), "{err}");
    }

    #[test]
    fn rms_of_full_scale_square_is_zero_db() {
        assert!((rms_dbfs(&[1.0, -1.0, 1.0, -1.0])).abs() < 1e-12);
        assert_eq!(rms_dbfs(&[0.0; 4]), f64::NEG_INFINITY);
    }
}

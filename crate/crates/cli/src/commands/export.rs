//! `export pitch|mel|pca`: plot data for F0 contours, mels and embedding
//! projections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::bail;
use svs_core::audio::read_wav;
use svs_core::features::{mel_spectrogram, normalize_mel};
use svs_core::metrics::pca_2d;
use svs_core::score::{extract_f0_autocorr, PitchConfig};

use crate::config::RunConfig;
use crate::{input, layout, InputError};

/// `label=path` or a bare path labelled by its file stem.
pub fn labelled(item: &str) -> (String, PathBuf) {
    match item.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(item);
            (stem(&path), path)
        }
    }
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    name.split('.').next().unwrap_or(name).to_string()
}

/// CSV `time_s,f0_hz,source` with one row per pitch frame of every input.
/// Unvoiced frames carry `f0_hz = 0`.
pub fn pitch_csv(inputs: &[String]) -> anyhow::Result<String> {
    let mut out = String::from("time_s,f0_hz,source\n");
    for item in inputs {
        let (label, path) = labelled(item);
        let wave = input(read_wav(&path), path.display())?;
        let track = input(extract_f0_autocorr(&wave, &PitchConfig::default()), path.display())?;
        for i in 0..track.len() {
            let f0 = if track.voiced[i] { track.f0_hz[i] } else { 0.0 };
            writeln!(out, "{:.3},{f0:.4},{label}", track.time(i))?;
        }
    }
    Ok(out)
}

/// Embedding files named by `inputs`; directories contribute every `.emb`
/// file they contain, in name order.
fn embedding_files(inputs: &[String]) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for item in inputs {
        let (label, path) = labelled(item);
        if path.is_dir() {
            for s in layout::stems(&path, "emb")? {
                let file = path.join(format!("{s}.emb"));
                out.push((s, file));
            }
        } else {
            out.push((label, path));
        }
    }
    Ok(out)
}

/// CSV `x,y,label` with one row per embedding, flattened to vectors.
pub fn pca_csv(inputs: &[String]) -> anyhow::Result<String> {
    let files = embedding_files(inputs)?;
    let mut vectors = Vec::with_capacity(files.len());
    for (_, path) in &files {
        vectors.push(layout::read_tensor_input(path)?.into_data());
    }
    let pca = input(pca_2d(&vectors), "pca")?;
    let mut out = String::from("x,y,label\n");
    for ((label, _), p) in files.iter().zip(&pca.points) {
        writeln!(out, "{:.9},{:.9},{label}", p[0], p[1])?;
    }
    Ok(out)
}

pub fn run_pitch(inputs: &[String], out: &Path) -> anyhow::Result<()> {
    let csv = pitch_csv(inputs)?;
    layout::write_file(out, csv.as_bytes())?;
    println!("export pitch: {} rows -> {}", csv.lines().count() - 1, out.display());
    Ok(())
}

pub fn run_mel(cfg: &RunConfig, wav: &Path, out: &Path) -> anyhow::Result<()> {
    let wave = input(read_wav(wav), wav.display())?;
    let mel = input(mel_spectrogram(&wave, &cfg.mel), wav.display())?;
    layout::write_mel(out, &normalize_mel(&mel, &cfg.mel))?;
    println!(
        "export mel: {} frames x {} bands -> {}",
        mel.n_frames,
        mel.n_mels,
        out.display()
    );
    Ok(())
}

pub fn run_pca(inputs: &[String], out: &Path) -> anyhow::Result<()> {
    if inputs.is_empty() {
        bail!(InputError("export pca needs at least one input".into()));
    }
    let csv = pca_csv(inputs)?;
    layout::write_file(out, csv.as_bytes())?;
    println!("export pca: {} points -> {}", csv.lines().count() - 1, out.display());
    Ok(())
}

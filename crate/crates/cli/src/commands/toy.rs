//! `toy-corpus`: writes the synthetic sung corpus in the input layout.

use std::path::Path;

use anyhow::Context;
use svs_core::audio::write_wav;
use svs_core::score::write_alignment;
use svs_core::synth::toy_corpus;

use crate::layout;

/// Writes `<out>/wav/<id>.wav` plus `<out>/align/<id>.tsv` and `<id>.txt`.
pub fn run(out: &Path, count: usize, lead_seconds: f64, seed: u64) -> anyhow::Result<()> {
    let wav_dir = out.join("wav");
    let align_dir = out.join("align");
    layout::create_dir(&wav_dir)?;
    layout::create_dir(&align_dir)?;
    let corpus = toy_corpus(count, lead_seconds, seed);
    for u in &corpus {
        let wav = wav_dir.join(format!("{}.wav", u.id));
        write_wav(&wav, &u.wave).with_context(|| format!("writing {}", wav.display()))?;
        layout::write_file(
            &align_dir.join(format!("{}.tsv", u.id)),
            write_alignment(&u.phones).as_bytes(),
        )?;
        layout::write_file(
            &align_dir.join(format!("{}.txt", u.id)),
            format!("{}\n", u.text).as_bytes(),
        )?;
    }
    println!("toy-corpus: {} utterances -> {}", corpus.len(), out.display());
    Ok(())
}

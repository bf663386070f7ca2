//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{evaluate, export, features, score, synth, toy, train};
use crate::config::{Profile, RunConfig, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "svs", version, about = "Toy singing voice synthesis pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Preset applied before the configuration file.
    #[arg(long, global = true, value_enum, default_value = "default")]
    pub profile: Profile,
    /// Override one configuration value, e.g. `--set aux.iterations=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Music scores from recordings and phone alignments.
    Score {
        #[command(subcommand)]
        action: ScoreAction,
    },
    /// Mel spectrograms, F0 tracks and priors for every phrase.
    Features {
        #[command(subcommand)]
        action: FeaturesAction,
    },
    /// Train the auxiliary decoder or the denoiser.
    Train {
        #[arg(value_enum)]
        stage: train::StageKind,
        /// Continue from the saved checkpoint of this stage.
        #[arg(long)]
        resume: bool,
    },
    /// Generate mels and waveforms for the phrases of the score file.
    Synthesize {
        /// Shallow-diffusion start step; 0 returns the auxiliary mel.
        #[arg(long)]
        q: Option<usize>,
        /// Restrict to these utterance ids.
        #[arg(long = "utt")]
        utterances: Vec<String>,
    },
    /// Objective metrics between paired `<utt>.wav` files.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Data files for plots.
    Export {
        #[command(subcommand)]
        item: ExportItem,
    },
    /// Print the effective configuration as TOML.
    Config,
    /// Write the synthetic sung corpus used by the toy profile.
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Silence before and after each phrase, in seconds.
        #[arg(long, default_value_t = 0.3)]
        lead: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScoreAction {
    Build,
}

#[derive(Debug, Subcommand)]
pub enum FeaturesAction {
    Extract {
        #[arg(long = "utt")]
        utterances: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExportItem {
    /// F0 contours as CSV `time_s,f0_hz,source`.
    Pitch {
        /// `label=path.wav` or `path.wav`; repeatable.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized mel of a recording as a tensor file.
    Mel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D PCA of embedding files as CSV `x,y,label`.
    Pca {
        /// `.emb` files or directories of them; repeatable.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl GlobalArgs {
    pub fn load(&self) -> anyhow::Result<RunConfig> {
        RunConfig::load(self.profile, self.config.as_deref(), &self.overrides)
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Score {
            action: ScoreAction::Build,
        } => score::run(&g.load()?),
        Command::Features {
            action: FeaturesAction::Extract { utterances },
        } => features::run(&g.load()?, &utterances),
        Command::Train { stage, resume } => {
            let cfg = g.load()?;
            match stage {
                train::StageKind::Aux => train::run_aux(&cfg, resume),
                train::StageKind::Denoiser => train::run_denoiser(&cfg, resume),
            }
        }
        Command::Synthesize { q, utterances } => {
            let mut cfg = g.load()?;
            if let Some(q) = q {
                cfg.diffusion.q = q;
                cfg.validate()?;
            }
            synth::run(&cfg, &utterances)
        }
        Command::Evaluate {
            reference,
            generated,
            out,
        } => evaluate::run(&g.load()?, &reference, &generated, out.as_ref()),
        Command::Export { item } => match item {
            ExportItem::Pitch { inputs, out } => export::run_pitch(&inputs, &out),
            ExportItem::Mel { input, out } => export::run_mel(&g.load()?, &input, &out),
            ExportItem::Pca { inputs, out } => export::run_pca(&inputs, &out),
        },
        Command::Config => {
            print!("{}", g.load()?.to_toml()?);
            Ok(())
        }
        Command::ToyCorpus { out, count, lead, seed } => toy::run(&out, count, lead, seed),
    }
}

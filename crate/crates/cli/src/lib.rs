//! Command-line front end: `train`, `eval`, `predict`, `synth`, `gradcheck`.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::info;

use config::{parse_override, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "dsdl", version, about = "Semantic-dictionary multi-label classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every verb.
#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hyper-parameter preset: voc or coco.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct Paths {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        paths: Paths,
    },
    /// Evaluate a checkpoint against labelled features.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        paths: Paths,
    },
    /// Write probabilities and thresholded labels for a feature file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        paths: Paths,
    },
    /// Generate a planted synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.to_string()));
    }
}

fn push_path(out: &mut Vec<(String, String)>, key: &str, v: &Option<PathBuf>) {
    push(out, key, &v.as_ref().map(|p| p.display().to_string()));
}

impl Paths {
    fn overrides(&self, out: &mut Vec<(String, String)>) {
        push_path(out, "features", &self.features);
        push_path(out, "labels", &self.labels);
        push_path(out, "embeddings", &self.embeddings);
        push_path(out, "checkpoint", &self.checkpoint);
        push_path(out, "report", &self.report);
        push_path(out, "output", &self.output);
    }
}

/// `--set` pairs first, then named flags, so named flags win.
fn resolve(common: &Common, extra: Vec<(String, String)>) -> CliResult<RunConfig> {
    let mut overrides = common.set.clone();
    push(&mut overrides, "preset", &common.preset);
    push(&mut overrides, "seed", &common.seed);
    overrides.extend(extra);
    let cfg = RunConfig::resolve(common.config.as_deref(), &overrides)?;
    info!("resolved configuration:\n{}", cfg.render());
    Ok(cfg)
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Train { common, paths } | Command::Eval { common, paths } | Command::Predict { common, paths } => {
            let mut extra = Vec::new();
            paths.overrides(&mut extra);
            let cfg = resolve(common, extra)?;
            match command {
                Command::Train { .. } => commands::cmd_train(&cfg),
                Command::Eval { .. } => commands::cmd_eval(&cfg).map(|_| ()),
                _ => commands::cmd_predict(&cfg),
            }
        }
        Command::Synth { common, synth, output } => {
            let mut extra = Vec::new();
            push(&mut extra, "synth_dim", &synth.dim);
            push(&mut extra, "synth_classes", &synth.classes);
            push(&mut extra, "synth_samples", &synth.samples);
            push(&mut extra, "synth_holdout", &synth.holdout);
            push(&mut extra, "synth_embedding_dim", &synth.embedding_dim);
            push(&mut extra, "synth_noise", &synth.noise);
            push_path(&mut extra, "output", output);
            commands::cmd_synth(&resolve(common, extra)?)
        }
        Command::Gradcheck { common, report } => {
            let mut extra = Vec::new();
            push_path(&mut extra, "report", report);
            commands::cmd_gradcheck(&resolve(common, extra)?).map(|_| ())
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

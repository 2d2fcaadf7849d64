//! Flat `key = value` run configuration.
//!
//! Resolution order: preset, then the config file, then command-line
//! overrides. The preset is taken from the overrides if present, else from
//! the file, else `voc`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dsdl_core::data::SynthConfig;
use dsdl_core::metrics::{ApConvention, EvalOptions};
use dsdl_core::model::{Architecture, FeatureSpec, Hyper};

use crate::error::{CliError, CliResult};

/// Every recognised key, in snapshot order.
pub const KEYS: &[&str] = &[
    "preset",
    "lambda",
    "beta",
    "lr",
    "momentum",
    "weight_decay",
    "lr_decay",
    "lr_decay_every",
    "epochs",
    "batch_size",
    "seed",
    "grad_mode",
    "sim_floor",
    "feature_module",
    "ae_hidden",
    "features",
    "labels",
    "embeddings",
    "checkpoint",
    "report",
    "output",
    "ap",
    "top_k",
    "threshold",
    "synth_dim",
    "synth_classes",
    "synth_samples",
    "synth_holdout",
    "synth_embedding_dim",
    "synth_noise",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub hyper: Hyper,
    pub arch: Architecture,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub ap: ApConvention,
    /// `None` means `min(3, c)`.
    pub top_k: Option<usize>,
    pub threshold: f64,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_preset("voc").expect("voc preset exists")
    }
}

fn bad(key: &str, value: &str, reason: impl ToString) -> CliError {
    CliError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn with_preset(name: &str) -> CliResult<Self> {
        let hyper = Hyper::preset(name).map_err(|e| bad("preset", name, e))?;
        Ok(RunConfig {
            preset: name.to_string(),
            hyper,
            arch: Architecture::default(),
            features: None,
            labels: None,
            embeddings: None,
            checkpoint: None,
            report: None,
            output: None,
            ap: ApConvention::AllPoints,
            top_k: None,
            threshold: 0.5,
            synth: SynthConfig::default(),
        })
    }

    /// Sets one key. `preset` is only accepted through [`RunConfig::resolve`].
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let h = &mut self.hyper;
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "lambda" => h.lambda = num(key, value)?,
            "beta" => h.beta = num(key, value)?,
            "lr" => h.lr = num(key, value)?,
            "momentum" => h.momentum = num(key, value)?,
            "weight_decay" => h.weight_decay = num(key, value)?,
            "lr_decay" => h.lr_decay = num(key, value)?,
            "lr_decay_every" => h.lr_decay_every = num(key, value)?,
            "epochs" => h.epochs = num(key, value)?,
            "batch_size" => h.batch_size = num(key, value)?,
            "seed" => {
                h.seed = num(key, value)?;
                self.synth.seed = h.seed;
            }
            "grad_mode" => h.grad_mode = value.parse().map_err(|e| bad(key, value, e))?,
            "sim_floor" => h.sim_floor = num(key, value)?,
            "feature_module" => {
                self.arch.features = value.parse::<FeatureSpec>().map_err(|e| bad(key, value, e))?
            }
            "ae_hidden" => self.arch.hidden = num(key, value)?,
            "features" => self.features = path(),
            "labels" => self.labels = path(),
            "embeddings" => self.embeddings = path(),
            "checkpoint" => self.checkpoint = path(),
            "report" => self.report = path(),
            "output" => self.output = path(),
            "ap" => {
                self.ap = match value {
                    "all_points" => ApConvention::AllPoints,
                    "eleven_point" => ApConvention::ElevenPoint,
                    _ => return Err(bad(key, value, "expected all_points or eleven_point")),
                }
            }
            "top_k" => {
                self.top_k = match value {
                    "" | "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "threshold" => self.threshold = num(key, value)?,
            "synth_dim" => self.synth.feature_dim = num(key, value)?,
            "synth_classes" => self.synth.classes = num(key, value)?,
            "synth_samples" => self.synth.samples = num(key, value)?,
            "synth_holdout" => self.synth.holdout = num(key, value)?,
            "synth_embedding_dim" => self.synth.embedding_dim = num(key, value)?,
            "synth_noise" => self.synth.noise_sigma = num(key, value)?,
            "preset" => return Err(bad(key, value, "preset must be resolved first")),
            other => return Err(CliError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Builds the final configuration from an optional file and
    /// `key=value` overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let file_pairs = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Io {
                    path: path.to_path_buf(),
                    source: e,
                })?;
                parse_pairs(&text, path)?
            }
            None => Vec::new(),
        };
        let preset = overrides
            .iter()
            .rev()
            .chain(file_pairs.iter().rev())
            .find(|(k, _)| k == "preset")
            .map_or("voc", |(_, v)| v.as_str());
        let mut cfg = RunConfig::with_preset(preset)?;
        for (k, v) in file_pairs.iter().chain(overrides) {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.hyper.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// One `key = value` line per key, readable by [`RunConfig::resolve`].
    pub fn render(&self) -> String {
        let h = &self.hyper;
        let s = &self.synth;
        let values: Vec<String> = vec![
            self.preset.clone(),
            h.lambda.to_string(),
            h.beta.to_string(),
            h.lr.to_string(),
            h.momentum.to_string(),
            h.weight_decay.to_string(),
            h.lr_decay.to_string(),
            h.lr_decay_every.to_string(),
            h.epochs.to_string(),
            h.batch_size.to_string(),
            h.seed.to_string(),
            h.grad_mode.to_string(),
            h.sim_floor.to_string(),
            self.arch.features.to_string(),
            self.arch.hidden.to_string(),
            opt_path(&self.features),
            opt_path(&self.labels),
            opt_path(&self.embeddings),
            opt_path(&self.checkpoint),
            opt_path(&self.report),
            opt_path(&self.output),
            match self.ap {
                ApConvention::AllPoints => "all_points".into(),
                ApConvention::ElevenPoint => "eleven_point".into(),
            },
            self.top_k.map_or_else(|| "auto".into(), |k| k.to_string()),
            self.threshold.to_string(),
            s.feature_dim.to_string(),
            s.classes.to_string(),
            s.samples.to_string(),
            s.holdout.to_string(),
            s.embedding_dim.to_string(),
            s.noise_sigma.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            ap: self.ap,
            top_k: self.top_k,
            threshold: self.threshold,
        }
    }

    /// The path stored under `key`, or a config error naming it.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> CliResult<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::MissingKey(key.to_string()))
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str, origin: &Path) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Syntax {
            origin: origin.display().to_string(),
            line: i + 1,
        })?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::UnknownKey(key.to_string()));
        }
        pairs.push((key.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses a `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String), String> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| format!("`{arg}` is not key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

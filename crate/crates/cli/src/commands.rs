//! One function per verb. Each writes its artifacts plus a `run.cfg`
//! snapshot of the resolved configuration.

use std::fs;
use std::path::Path;

use log::info;

use dsdl_core::data::{
    load_checkpoint, load_fmat, load_glove, load_labels, save_checkpoint, save_fmat, save_labels,
    synth_generate, write_curve_csv, write_planted, LabelTable, LabeledFeatureSet,
};
use dsdl_core::diffcore::{GradCheckConfig, GradCheckReport};
use dsdl_core::metrics::{assign_threshold, evaluate_probs_with, MetricReport};
use dsdl_core::model::{apus_train, ToyProblem, TOY_FEATURES};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SNAPSHOT_FILE: &str = "run.cfg";
pub const CURVE_FILE: &str = "curve.csv";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn snapshot(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    write_file(&dir.join(SNAPSHOT_FILE), &cfg.render())
}

fn load_training_set(cfg: &RunConfig) -> CliResult<LabeledFeatureSet> {
    let inputs = load_fmat(cfg.require("features", &cfg.features)?)?;
    let table = load_labels(cfg.require("labels", &cfg.labels)?)?;
    let space = load_glove(cfg.require("embeddings", &cfg.embeddings)?, &table.class_names)?;
    Ok(LabeledFeatureSet::new(inputs, table.labels, table.ids, space)?)
}

/// Trains and writes the checkpoint directory with `curve.csv`.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.require("checkpoint", &cfg.checkpoint)?;
    let data = load_training_set(cfg)?;
    info!(
        "training on {} samples, {} classes, input dim {}",
        data.len(),
        data.class_count(),
        data.input_dim()
    );
    let outcome = apus_train(&data, &cfg.arch, &cfg.hyper)?;
    create_dir(out)?;
    save_checkpoint(&outcome.checkpoint, out)?;
    write_curve_csv(out.join(CURVE_FILE), &outcome.curve)?;
    snapshot(cfg, out)?;
    info!("checkpoint written to {}", out.display());
    Ok(())
}

/// Evaluates a checkpoint; prints the table and optionally writes
/// `metrics.csv` and `metrics.txt` under `report`.
pub fn cmd_eval(cfg: &RunConfig) -> CliResult<MetricReport> {
    let ck = load_checkpoint(cfg.require("checkpoint", &cfg.checkpoint)?)?;
    let inputs = load_fmat(cfg.require("features", &cfg.features)?)?;
    let labels_path = cfg.require("labels", &cfg.labels)?;
    let table = load_labels(labels_path)?;
    table.expect_classes(&ck.class_names, labels_path)?;
    let probs = ck.predict(&inputs)?;
    let report = evaluate_probs_with(&probs, &table.labels, &cfg.eval_options())?;
    let text = report.to_table(&ck.class_names);
    print!("{text}");
    if let Some(dir) = &cfg.report {
        create_dir(dir)?;
        write_file(&dir.join("metrics.csv"), &report.to_csv(&ck.class_names))?;
        write_file(&dir.join("metrics.txt"), &text)?;
        snapshot(cfg, dir)?;
    }
    Ok(report)
}

/// Writes `probs.fmat` and thresholded `labels.csv` under `output`.
pub fn cmd_predict(cfg: &RunConfig) -> CliResult<()> {
    let ck = load_checkpoint(cfg.require("checkpoint", &cfg.checkpoint)?)?;
    let inputs = load_fmat(cfg.require("features", &cfg.features)?)?;
    let out = cfg.require("output", &cfg.output)?;
    let probs = ck.predict(&inputs)?;
    let labels = assign_threshold(&probs, cfg.threshold)?;
    create_dir(out)?;
    save_fmat(&probs, out.join("probs.fmat"))?;
    save_labels(
        out.join("labels.csv"),
        &LabelTable {
            class_names: ck.class_names.clone(),
            ids: (0..inputs.cols()).map(|i| i.to_string()).collect(),
            labels,
        },
    )?;
    snapshot(cfg, out)?;
    Ok(())
}

/// Writes a planted dataset under `output`.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.require("output", &cfg.output)?;
    let data = synth_generate(&cfg.synth)?;
    write_planted(&data, out)?;
    snapshot(cfg, out)?;
    info!(
        "planted dataset: d={} c={} N={} holdout={} in {}",
        cfg.synth.feature_dim,
        cfg.synth.classes,
        cfg.synth.samples,
        cfg.synth.holdout,
        out.display()
    );
    Ok(())
}

/// Finite-difference check of the full model on a small fixed problem.
pub fn cmd_gradcheck(cfg: &RunConfig) -> CliResult<GradCheckReport> {
    let mut toy = ToyProblem::new(cfg.hyper.seed, TOY_FEATURES)?;
    let report = toy.grad_check(&cfg.hyper, &GradCheckConfig::default())?;
    print!("{report}");
    if let Some(dir) = &cfg.report {
        create_dir(dir)?;
        write_file(&dir.join("gradcheck.txt"), &report.to_string())?;
        snapshot(cfg, dir)?;
    }
    if !report.passed() {
        return Err(CliError::GradCheck(report.failing_blocks().join(", ")));
    }
    Ok(report)
}

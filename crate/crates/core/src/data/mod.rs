//! Dataset ingestion, the planted-model generator and on-disk formats.

mod checkpoint;
mod fmat;
mod glove;
mod labels;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_curve_csv, MANIFEST_FILE};
pub use fmat::{decode_fmat, encode_fmat, load_fmat, save_fmat, FMAT_MAGIC, FMAT_VERSION};
pub use glove::{load_glove, read_glove};
pub use labels::{load_labels, read_labels, save_labels, write_labels, LabelTable};
pub use synth::{synth_generate, write_planted, PlantedModel, SynthConfig, SynthOutput};

use crate::error::{Error, Result};
use crate::model::check_binary;
use crate::numerics::Matrix;
use crate::semdict::SemanticSpace;

/// Column-aligned inputs, binary labels and sample ids, plus the class
/// embeddings the labels refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureSet {
    inputs: Matrix,
    labels: Matrix,
    ids: Vec<String>,
    semantic: SemanticSpace,
}

impl LabeledFeatureSet {
    pub fn new(
        inputs: Matrix,
        labels: Matrix,
        ids: Vec<String>,
        semantic: SemanticSpace,
    ) -> Result<Self> {
        let n = inputs.cols();
        if labels.cols() != n || ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "sample counts disagree: {} inputs, {} label columns, {} ids",
                n,
                labels.cols(),
                ids.len()
            )));
        }
        if labels.rows() != semantic.class_count() {
            return Err(Error::ClassCountMismatch {
                expected: semantic.class_count(),
                found: labels.rows(),
            });
        }
        check_binary(&labels)?;
        let set = LabeledFeatureSet {
            inputs,
            labels,
            ids,
            semantic,
        };
        let empty = set.empty_label_count();
        if empty > 0 {
            log::warn!("{empty} sample(s) have no positive label");
        }
        Ok(set)
    }

    /// `n_in x N`.
    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    /// `c x N`.
    pub fn labels(&self) -> &Matrix {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn semantic(&self) -> &SemanticSpace {
        &self.semantic
    }

    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.rows()
    }

    pub fn class_count(&self) -> usize {
        self.labels.rows()
    }

    /// Samples with no positive label.
    pub fn empty_label_count(&self) -> usize {
        (0..self.len())
            .filter(|&s| (0..self.class_count()).all(|c| self.labels.get(c, s) == 0.0))
            .count()
    }

    /// Reorders classes so that new class `i` is old class `perm[i]`.
    pub fn permute_classes(&self, perm: &[usize]) -> Result<Self> {
        LabeledFeatureSet::new(
            self.inputs.clone(),
            self.labels.select_rows(perm),
            self.ids.clone(),
            self.semantic.permuted(perm)?,
        )
    }
}

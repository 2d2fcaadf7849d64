//! Planted-model data: features are generated from a known orthonormal
//! dictionary and known codes, so recovery can be checked exactly.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::fmat::save_fmat;
use super::glove::write_glove;
use super::labels::{save_labels, LabelTable};
use super::LabeledFeatureSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::semdict::SemanticSpace;

/// Probability that a class is present in a sample.
pub const POSITIVE_RATE: f64 = 0.3;
/// Code range of present classes.
pub const POSITIVE_CODES: (f64, f64) = (2.0, 4.0);
/// Code range of absent classes.
pub const NEGATIVE_CODES: (f64, f64) = (-0.3, 0.3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub classes: usize,
    pub samples: usize,
    /// Extra samples drawn from the same model after the training split.
    pub holdout: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            feature_dim: 64,
            classes: 8,
            samples: 512,
            holdout: 128,
            embedding_dim: 32,
            seed: 0,
            noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    /// `d x c`, orthonormal columns.
    pub dictionary: Matrix,
    /// `k x c` class embeddings.
    pub embeddings: Matrix,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub planted: PlantedModel,
    pub train: LabeledFeatureSet,
    /// Planted codes of the training split, `c x N`.
    pub train_codes: Matrix,
    pub holdout: Option<LabeledFeatureSet>,
    pub holdout_codes: Option<Matrix>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Modified Gram-Schmidt on the columns of `m`. Returns `None` when the
/// columns are numerically dependent.
fn orthonormalize(m: &Matrix) -> Option<Matrix> {
    let (d, c) = m.shape();
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| m.col(j)).collect();
    for j in 0..c {
        for i in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let (qi, v) = (&done[i], &mut rest[0]);
            let dot: f64 = qi.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(qi).for_each(|(x, q)| *x -= dot * q);
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return None;
        }
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    Some(Matrix::from_fn(d, c, |r, j| cols[j][r]))
}

struct Split {
    features: Matrix,
    labels: Matrix,
    codes: Matrix,
}

fn sample_split(
    rng: &mut ChaCha8Rng,
    dictionary: &Matrix,
    n: usize,
    noise_sigma: f64,
) -> Result<Split> {
    let (d, c) = dictionary.shape();
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
    let mut labels = Matrix::zeros(c, n);
    let mut codes = Matrix::zeros(c, n);
    for s in 0..n {
        let y: Vec<bool> = loop {
            let y: Vec<bool> = (0..c).map(|_| rng.gen_bool(POSITIVE_RATE)).collect();
            if y.iter().any(|&p| p) {
                break y;
            }
        };
        for (j, &present) in y.iter().enumerate() {
            let (lo, hi) = if present { POSITIVE_CODES } else { NEGATIVE_CODES };
            codes.set(j, s, rng.gen_range(lo..hi))?;
            labels.set(j, s, if present { 1.0 } else { 0.0 })?;
        }
    }
    let mut features = dictionary.matmul(&codes)?;
    if noise_sigma > 0.0 {
        let eps = Matrix::from_fn(d, n, |_, _| noise.sample(rng));
        features = features.add(&eps)?;
    }
    Ok(Split {
        features,
        labels,
        codes,
    })
}

/// Draws a planted model and `samples + holdout` samples from it.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    if cfg.classes >= cfg.feature_dim {
        return Err(Error::NotUndercomplete {
            classes: cfg.classes,
            dim: cfg.feature_dim,
        });
    }
    if cfg.classes < 2 || cfg.embedding_dim == 0 || cfg.samples == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs >= 2 classes, a positive embedding dim and samples".into(),
        ));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {}",
            cfg.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dictionary = loop {
        if let Some(q) = orthonormalize(&gaussian(&mut rng, cfg.feature_dim, cfg.classes)) {
            break q;
        }
    };
    let embeddings = gaussian(&mut rng, cfg.embedding_dim, cfg.classes);
    let class_names: Vec<String> = (0..cfg.classes).map(|i| format!("class{i}")).collect();
    let space = SemanticSpace::new(embeddings.clone(), class_names.clone())?;

    let train = sample_split(&mut rng, &dictionary, cfg.samples, cfg.noise_sigma)?;
    let train_set = LabeledFeatureSet::new(
        train.features,
        train.labels,
        (0..cfg.samples).map(|i| format!("s{i:05}")).collect(),
        space.clone(),
    )?;
    let (holdout, holdout_codes) = if cfg.holdout > 0 {
        let h = sample_split(&mut rng, &dictionary, cfg.holdout, cfg.noise_sigma)?;
        let set = LabeledFeatureSet::new(
            h.features,
            h.labels,
            (0..cfg.holdout).map(|i| format!("h{i:05}")).collect(),
            space,
        )?;
        (Some(set), Some(h.codes))
    } else {
        (None, None)
    };

    Ok(SynthOutput {
        planted: PlantedModel {
            dictionary,
            embeddings,
            class_names,
        },
        train: train_set,
        train_codes: train.codes,
        holdout,
        holdout_codes,
    })
}

fn write_split(dir: &Path, prefix: &str, set: &LabeledFeatureSet, codes: &Matrix) -> Result<()> {
    save_fmat(set.inputs(), dir.join(format!("{prefix}features.fmat")))?;
    save_fmat(codes, dir.join(format!("{prefix}codes.fmat")))?;
    save_labels(
        dir.join(format!("{prefix}labels.csv")),
        &LabelTable {
            class_names: set.semantic().class_names().to_vec(),
            ids: set.ids().to_vec(),
            labels: set.labels().clone(),
        },
    )
}

/// Writes the dataset under `dir`:
///
/// - `features.fmat`, `labels.csv`, `codes.fmat`: training split
/// - `holdout_features.fmat`, `holdout_labels.csv`, `holdout_codes.fmat`
/// - `embeddings.txt`: class embeddings in GloVe text form
/// - `dictionary.fmat`: the planted dictionary
pub fn write_planted(out: &SynthOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_split(dir, "", &out.train, &out.train_codes)?;
    if let (Some(set), Some(codes)) = (&out.holdout, &out.holdout_codes) {
        write_split(dir, "holdout_", set, codes)?;
    }
    save_fmat(&out.planted.dictionary, dir.join("dictionary.fmat"))?;
    let path = dir.join("embeddings.txt");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_glove(
        BufWriter::new(file),
        &out.planted.class_names,
        &out.planted.embeddings,
    )
    .map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::represent::solve_codes;
    use crate::semdict::SemanticDictionary;

    #[test]
    fn dictionary_is_orthonormal() {
        let out = synth_generate(&SynthConfig::default()).unwrap();
        let gram = out.planted.dictionary.t_matmul(&out.planted.dictionary).unwrap();
        let err = gram.sub(&Matrix::identity(8)).unwrap().frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn noiseless_codes_are_recovered() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let out = synth_generate(&cfg).unwrap();
        let dict = SemanticDictionary::new(out.planted.dictionary.clone()).unwrap();
        let codes = solve_codes(&dict, out.train.inputs(), 1e-12).unwrap();
        let max_err = codes
            .alpha
            .sub(&out.train_codes)
            .unwrap()
            .as_slice()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-6, "{max_err}");
        // thresholding at 1.0 reproduces the planted labels
        let labels = codes.alpha.map("threshold", |a| if a > 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(&labels, out.train.labels());
    }

    #[test]
    fn every_sample_has_a_positive() {
        let out = synth_generate(&SynthConfig::default()).unwrap();
        assert_eq!(out.train.empty_label_count(), 0);
        assert_eq!(out.holdout.unwrap().len(), 128);
    }

    #[test]
    fn positive_rate_near_nominal() {
        let cfg = SynthConfig {
            samples: 2000,
            holdout: 0,
            seed: 11,
            ..SynthConfig::default()
        };
        let out = synth_generate(&cfg).unwrap();
        let rate = out.train.labels().sum() / (8.0 * 2000.0);
        // resampling all-negative rows nudges the rate slightly upward
        assert!((rate - POSITIVE_RATE).abs() <= 0.05, "{rate}");
    }

    #[test]
    fn rejects_overcomplete() {
        let cfg = SynthConfig {
            feature_dim: 8,
            classes: 8,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_generate(&cfg), Err(Error::NotUndercomplete { .. })));
    }

    #[test]
    fn same_seed_writes_identical_bytes() {
        let cfg = SynthConfig {
            samples: 40,
            holdout: 10,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_planted(&synth_generate(&cfg).unwrap(), a.path()).unwrap();
        write_planted(&synth_generate(&cfg).unwrap(), b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert_eq!(names.len(), 8);
        for n in names {
            assert_eq!(
                fs::read(a.path().join(&n)).unwrap(),
                fs::read(b.path().join(&n)).unwrap(),
                "{n:?}"
            );
        }
    }
}

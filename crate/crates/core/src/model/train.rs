//! Alternating training: every batch solves the codes in closed form on
//! the forward pass, then updates the feature and autoencoder parameters
//! by SGD on the backward pass.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, DsdlNet, Hyper, LossBreakdown};
use crate::data::LabeledFeatureSet;
use crate::diffcore::{sgd_step, ParamStore, SgdConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_probs, MetricReport};
use crate::numerics::Matrix;
use crate::represent::predict;
use crate::semdict::{SemanticDictionary, SemanticSpace};

/// Epoch means of each loss component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub lr: f64,
    pub ce: f64,
    pub dic: f64,
    pub sim: f64,
    pub total: f64,
}

/// Everything needed to predict: parameters, the frozen dictionary and
/// the settings they were trained with.
///
/// All matrices are rounded to `f32` precision on creation so that the
/// on-disk form reproduces predictions bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub hyper: Hyper,
    pub arch: Architecture,
    pub class_names: Vec<String>,
    pub dictionary: SemanticDictionary,
    pub input_dim: usize,
    pub epoch: usize,
}

impl Checkpoint {
    fn freeze(
        params: &ParamStore,
        net: &mut DsdlNet,
        space: &SemanticSpace,
        hyper: &Hyper,
        arch: &Architecture,
        input_dim: usize,
        epoch: usize,
    ) -> Result<Self> {
        let mut frozen = ParamStore::new();
        for (name, p) in params.iter() {
            frozen.insert(name, p.value.round_to_f32())?;
        }
        let dictionary =
            SemanticDictionary::new(net.dictionary(&frozen, space)?.atoms().round_to_f32())?;
        Ok(Checkpoint {
            params: frozen,
            hyper: *hyper,
            arch: *arch,
            class_names: space.class_names().to_vec(),
            dictionary,
            input_dim,
            epoch,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Label probabilities, `c x N`, for raw inputs `n_in x N`.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut net = DsdlNet::attach(&self.params, &self.arch, self.input_dim)?;
        let feats = net.features.forward(&self.params, inputs)?;
        predict(&self.dictionary, &feats, self.hyper.lambda)
    }

    pub fn evaluate(&self, data: &LabeledFeatureSet) -> Result<MetricReport> {
        if data.class_count() != self.class_count() {
            return Err(Error::ClassCountMismatch {
                expected: self.class_count(),
                found: data.class_count(),
            });
        }
        let probs = self.predict(data.inputs())?;
        evaluate_probs(&probs, data.labels())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
}

fn setup(
    data: &LabeledFeatureSet,
    arch: &Architecture,
    hyper: &Hyper,
) -> Result<(ParamStore, DsdlNet, ChaCha8Rng)> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = ParamStore::new();
    let net = DsdlNet::build(
        &mut params,
        &mut rng,
        arch,
        data.input_dim(),
        data.semantic().embedding_dim(),
    )?;
    let c = data.class_count();
    if c >= net.feature_dim() {
        return Err(Error::NotUndercomplete {
            classes: c,
            dim: net.feature_dim(),
        });
    }
    Ok((params, net, rng))
}

/// The checkpoint training would start from.
pub fn initial_checkpoint(
    data: &LabeledFeatureSet,
    arch: &Architecture,
    hyper: &Hyper,
) -> Result<Checkpoint> {
    let (params, mut net, _) = setup(data, arch, hyper)?;
    Checkpoint::freeze(&params, &mut net, data.semantic(), hyper, arch, data.input_dim(), 0)
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite { .. } | Error::NotPositiveDefinite { .. } | Error::ZeroReconstruction { .. }
    )
}

/// Trains the full model with minibatch SGD.
pub fn apus_train(
    data: &LabeledFeatureSet,
    arch: &Architecture,
    hyper: &Hyper,
) -> Result<TrainOutcome> {
    let (mut params, mut net, mut rng) = setup(data, arch, hyper)?;
    let schedule = hyper.schedule();
    let space = data.semantic();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let lr = schedule.lr(epoch);
        let sgd = SgdConfig {
            lr,
            momentum: hyper.momentum,
            weight_decay: hyper.weight_decay,
        };
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for (batch, idx) in order.chunks(hyper.batch_size).enumerate() {
            let diverged = |e: Error| {
                if is_numerical_failure(&e) {
                    Error::Divergence { epoch, batch }
                } else {
                    e
                }
            };
            let x = data.inputs().select_cols(idx);
            let y = data.labels().select_cols(idx);
            params.zero_grads();
            let LossBreakdown { ce, dic, sim, total } = net
                .forward_backward(&mut params, space, &x, &y, hyper)
                .map_err(diverged)?;
            if !total.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            sgd_step(&mut params, &sgd).map_err(diverged)?;
            for (s, v) in sums.iter_mut().zip([ce, dic, sim, total]) {
                *s += v;
            }
            batches += 1;
        }
        let n = batches as f64;
        let row = CurveRow {
            epoch,
            lr,
            ce: sums[0] / n,
            dic: sums[1] / n,
            sim: sums[2] / n,
            total: sums[3] / n,
        };
        debug!("{row:?}");
        if epoch % 10 == 0 || epoch + 1 == hyper.epochs {
            info!(
                "epoch {:>3} lr {:.0e} ce {:.4} dic {:.4} sim {:.4} total {:.4}",
                row.epoch, row.lr, row.ce, row.dic, row.sim, row.total
            );
        }
        curve.push(row);
    }

    let checkpoint = Checkpoint::freeze(
        &params,
        &mut net,
        space,
        hyper,
        arch,
        data.input_dim(),
        hyper.epochs,
    )
    .map_err(|e| {
        if is_numerical_failure(&e) {
            Error::Divergence {
                epoch: hyper.epochs,
                batch: 0,
            }
        } else {
            e
        }
    })?;
    Ok(TrainOutcome { checkpoint, curve })
}

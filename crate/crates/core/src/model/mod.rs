//! The composed model: feature module, semantic dictionary and ridge codes,
//! trained jointly on
//! `L_total = (L_ce + β·L_dic) / max(L_sim, floor)`.

mod features;
mod loss;
mod toy;
mod train;

pub use features::{
    FeatureModule, FeatureSpec, FEAT_FC1_BIAS, FEAT_FC1_WEIGHT, FEAT_FC2_BIAS, FEAT_FC2_WEIGHT,
};
pub use loss::{ce_loss, check_binary, total_loss, CrossEntropy, TotalLoss};
pub use toy::{
    ToyProblem, TOY_BATCH, TOY_CLASSES, TOY_EMBEDDING_DIM, TOY_FEATURES, TOY_HIDDEN, TOY_INPUT_DIM,
};
pub use train::{apus_train, initial_checkpoint, Checkpoint, CurveRow, TrainOutcome};

use rand::Rng;

use crate::diffcore::{ParamStore, StepSchedule};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::represent::{backward_codes, solve_codes, CodeUpstream, GradMode};
use crate::semdict::{
    similarity_loss, AutoencoderDims, SemanticDictionary, SemanticSpace, TiedAutoencoder,
};

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Ridge weight on `‖α‖²`.
    pub lambda: f64,
    /// Weight of the dictionary loss against cross-entropy.
    pub beta: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    /// Lower clamp on the similarity divisor.
    pub sim_floor: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper::voc()
    }
}

impl Hyper {
    /// λ = 10, β = 1e-4.
    pub fn voc() -> Self {
        Hyper {
            lambda: 10.0,
            beta: 1e-4,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_decay: 0.1,
            lr_decay_every: 40,
            epochs: 100,
            batch_size: 16,
            seed: 0,
            grad_mode: GradMode::Full,
            sim_floor: 1e-3,
        }
    }

    /// λ = 0.1, β = 1e-6.
    pub fn coco() -> Self {
        Hyper {
            lambda: 0.1,
            beta: 1e-6,
            ..Hyper::voc()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "voc" => Ok(Hyper::voc()),
            "coco" => Ok(Hyper::coco()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset `{other}` (expected voc or coco)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.sim_floor > 0.0 && self.sim_floor <= 1.0) {
            return bad(format!("sim_floor must be in (0, 1], got {}", self.sim_floor));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be >= 0, got {}", self.lr));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule {
            base_lr: self.lr,
            gamma: self.lr_decay,
            every: self.lr_decay_every,
        }
    }
}

/// Network shape choices that are not optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub features: FeatureSpec,
    /// Width of the autoencoder's hidden layer.
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            features: FeatureSpec::Passthrough,
            hidden: 1024,
        }
    }
}

/// Per-batch loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub dic: f64,
    pub sim: f64,
    pub total: f64,
}

/// Layers of the full model. Parameters live in a separate [`ParamStore`].
pub struct DsdlNet {
    pub features: FeatureModule,
    pub autoencoder: TiedAutoencoder,
}

impl DsdlNet {
    pub fn build<R: Rng>(
        params: &mut ParamStore,
        rng: &mut R,
        arch: &Architecture,
        input_dim: usize,
        embedding_dim: usize,
    ) -> Result<Self> {
        let features = FeatureModule::build(params, rng, arch.features, input_dim)?;
        let dims = AutoencoderDims {
            embedding_dim,
            hidden: arch.hidden,
            feature_dim: features.output_dim(),
        };
        let autoencoder = TiedAutoencoder::build(params, rng, dims)?;
        Ok(DsdlNet {
            features,
            autoencoder,
        })
    }

    pub fn attach(params: &ParamStore, arch: &Architecture, input_dim: usize) -> Result<Self> {
        let features = FeatureModule::attach(params, arch.features, input_dim)?;
        let dims = TiedAutoencoder::dims_from(params)?;
        if dims.feature_dim != features.output_dim() || dims.hidden != arch.hidden {
            return Err(Error::InvalidArgument(format!(
                "autoencoder dims {dims:?} do not fit feature module {} / hidden {}",
                arch.features, arch.hidden
            )));
        }
        let autoencoder = TiedAutoencoder::attach(params, dims)?;
        Ok(DsdlNet {
            features,
            autoencoder,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.output_dim()
    }

    /// Forward pass on one batch followed by the backward pass, adding
    /// every parameter gradient into `params`.
    pub fn forward_backward(
        &mut self,
        params: &mut ParamStore,
        space: &SemanticSpace,
        inputs: &Matrix,
        labels: &Matrix,
        hyper: &Hyper,
    ) -> Result<LossBreakdown> {
        let feats = self.features.forward(params, inputs)?;
        let dict = self.autoencoder.generate_dictionary(params, space)?;
        let recon = self.autoencoder.reconstruct(params, &dict)?;
        let codes = solve_codes(&dict, &feats, hyper.lambda)?;

        let sim = similarity_loss(space, &recon)?;
        let ce = ce_loss(&codes.alpha, labels)?;
        let dic = codes.dictionary_loss()?;
        let total = total_loss(ce.value, dic, sim.value, hyper.beta, hyper.sim_floor);

        let upstream = CodeUpstream {
            codes: ce.grad.scale(total.d_ce)?,
            dic_weight: total.d_dic,
        };
        let code_grads = backward_codes(&codes, &upstream, hyper.grad_mode)?;

        let mut grad_dict = self
            .autoencoder
            .decoder_backward(params, &sim.grad.scale(total.d_sim)?)?;
        grad_dict.axpy(1.0, &code_grads.dictionary)?;
        self.autoencoder.encoder_backward(params, &grad_dict)?;
        self.features.backward(params, &code_grads.features)?;

        Ok(LossBreakdown {
            ce: ce.value,
            dic,
            sim: sim.value,
            total: total.value,
        })
    }

    pub fn dictionary(
        &mut self,
        params: &ParamStore,
        space: &SemanticSpace,
    ) -> Result<SemanticDictionary> {
        self.autoencoder.generate_dictionary(params, space)
    }
}

//! A small fixed composition for gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Architecture, DsdlNet, FeatureSpec, Hyper};
use crate::diffcore::{grad_check, GradCheckConfig, GradCheckReport, ParamStore};
use crate::error::Result;
use crate::numerics::Matrix;
use crate::semdict::SemanticSpace;

pub const TOY_EMBEDDING_DIM: usize = 8;
pub const TOY_CLASSES: usize = 4;
pub const TOY_BATCH: usize = 6;
pub const TOY_INPUT_DIM: usize = 10;
pub const TOY_HIDDEN: usize = 8;

/// MLP features `10 -> 12 -> 16`.
pub const TOY_FEATURES: FeatureSpec = FeatureSpec::Mlp {
    hidden: 12,
    out_dim: 16,
};

pub struct ToyProblem {
    pub params: ParamStore,
    pub net: DsdlNet,
    pub space: SemanticSpace,
    pub inputs: Matrix,
    pub labels: Matrix,
}

impl ToyProblem {
    pub fn new(seed: u64, features: FeatureSpec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, c, b, n_in) = (TOY_EMBEDDING_DIM, TOY_CLASSES, TOY_BATCH, TOY_INPUT_DIM);
        let space = SemanticSpace::new(
            Matrix::from_fn(k, c, |_, _| rng.gen_range(-1.0..1.0)),
            (0..c).map(|i| format!("c{i}")).collect(),
        )?;
        let mut params = ParamStore::new();
        let arch = Architecture {
            features,
            hidden: TOY_HIDDEN,
        };
        let net = DsdlNet::build(&mut params, &mut rng, &arch, n_in, k)?;
        // nonzero biases so their gradients are not trivially small
        for name in params.names() {
            if name.ends_with("bias") {
                let (r, _) = params.value(&name)?.shape();
                params.set_value(&name, Matrix::from_fn(r, 1, |_, _| rng.gen_range(-0.1..0.1)))?;
            }
        }
        let inputs = Matrix::from_fn(n_in, b, |_, _| rng.gen_range(-2.0..2.0));
        let labels = Matrix::from_fn(c, b, |_, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
        Ok(ToyProblem {
            params,
            net,
            space,
            inputs,
            labels,
        })
    }

    /// Checks every parameter block of `L_total` against central differences.
    pub fn grad_check(&mut self, hyper: &Hyper, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let ToyProblem {
            params,
            net,
            space,
            inputs,
            labels,
        } = self;
        grad_check(
            |p| Ok(net.forward_backward(p, space, inputs, labels, hyper)?.total),
            params,
            cfg,
        )
    }
}

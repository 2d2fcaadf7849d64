use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::diffcore::{fully_connected, Layer, LeakyRelu, Linear, ParamStore, Sequential};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEAT_FC1_WEIGHT: &str = "feat.fc1.weight";
pub const FEAT_FC1_BIAS: &str = "feat.fc1.bias";
pub const FEAT_FC2_WEIGHT: &str = "feat.fc2.weight";
pub const FEAT_FC2_BIAS: &str = "feat.fc2.bias";

/// Which feature extractor sits in front of the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSpec {
    /// Inputs are already features.
    #[default]
    Passthrough,
    /// `FC(in→hidden) → LeakyReLU(0.2) → FC(hidden→out)`.
    Mlp { hidden: usize, out_dim: usize },
}

impl FeatureSpec {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureSpec::Passthrough => input_dim,
            FeatureSpec::Mlp { out_dim, .. } => *out_dim,
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSpec::Passthrough => write!(f, "passthrough"),
            FeatureSpec::Mlp { hidden, out_dim } => write!(f, "mlp:{hidden}:{out_dim}"),
        }
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    /// `passthrough` or `mlp:<hidden>:<out_dim>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "passthrough" {
            return Ok(FeatureSpec::Passthrough);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["mlp", h, o] => {
                let hidden = h.parse().ok().filter(|&v: &usize| v > 0);
                let out_dim = o.parse().ok().filter(|&v: &usize| v > 0);
                match (hidden, out_dim) {
                    (Some(hidden), Some(out_dim)) => Ok(FeatureSpec::Mlp { hidden, out_dim }),
                    _ => Err(Error::InvalidArgument(format!("bad mlp dims in `{s}`"))),
                }
            }
            _ => Err(Error::InvalidArgument(format!(
                "unknown feature module `{s}` (expected passthrough or mlp:<hidden>:<out>)"
            ))),
        }
    }
}

/// Maps raw inputs to d-dimensional features.
pub struct FeatureModule {
    spec: FeatureSpec,
    input_dim: usize,
    net: Option<Sequential>,
}

impl FeatureModule {
    pub fn build<R: Rng>(
        params: &mut ParamStore,
        rng: &mut R,
        spec: FeatureSpec,
        input_dim: usize,
    ) -> Result<Self> {
        let net = match spec {
            FeatureSpec::Passthrough => None,
            FeatureSpec::Mlp { hidden, out_dim } => {
                let fc1 = fully_connected(params, rng, "feat.fc1", input_dim, hidden, true)?;
                let fc2 = fully_connected(params, rng, "feat.fc2", hidden, out_dim, true)?;
                Some(Self::stack(fc1, fc2))
            }
        };
        Ok(FeatureModule {
            spec,
            input_dim,
            net,
        })
    }

    pub fn attach(params: &ParamStore, spec: FeatureSpec, input_dim: usize) -> Result<Self> {
        let net = match spec {
            FeatureSpec::Passthrough => None,
            FeatureSpec::Mlp { hidden, out_dim } => {
                for (name, shape) in [
                    (FEAT_FC1_WEIGHT, (hidden, input_dim)),
                    (FEAT_FC1_BIAS, (hidden, 1)),
                    (FEAT_FC2_WEIGHT, (out_dim, hidden)),
                    (FEAT_FC2_BIAS, (out_dim, 1)),
                ] {
                    let v = params.value(name)?;
                    if v.shape() != shape {
                        return Err(Error::DimensionMismatch {
                            op: "attach_features",
                            left: shape,
                            right: v.shape(),
                        });
                    }
                }
                Some(Self::stack(
                    Linear::new(FEAT_FC1_WEIGHT, Some(FEAT_FC1_BIAS.into())),
                    Linear::new(FEAT_FC2_WEIGHT, Some(FEAT_FC2_BIAS.into())),
                ))
            }
        };
        Ok(FeatureModule {
            spec,
            input_dim,
            net,
        })
    }

    fn stack(fc1: Linear, fc2: Linear) -> Sequential {
        Sequential::new(
            "features",
            vec![
                Box::new(fc1),
                Box::new(LeakyRelu::new(0.2).expect("positive slope")),
                Box::new(fc2),
            ],
        )
    }

    pub fn spec(&self) -> FeatureSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim(self.input_dim)
    }

    pub fn forward(&mut self, params: &ParamStore, inputs: &Matrix) -> Result<Matrix> {
        if inputs.rows() != self.input_dim {
            return Err(Error::DimensionMismatch {
                op: "features",
                left: (self.input_dim, inputs.cols()),
                right: inputs.shape(),
            });
        }
        match &mut self.net {
            None => Ok(inputs.clone()),
            Some(net) => net.forward(params, inputs),
        }
    }

    /// Accumulates parameter gradients given `dL/dF`. The passthrough
    /// module has none.
    pub fn backward(&mut self, params: &mut ParamStore, grad: &Matrix) -> Result<()> {
        if let Some(net) = &mut self.net {
            net.backward(params, grad)?;
        }
        Ok(())
    }
}

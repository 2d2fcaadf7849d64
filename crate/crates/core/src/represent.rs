//! Ridge-regularized collaborative coding over a semantic dictionary.
//!
//! For features `F` (d x B) the codes are
//! `α = (DᵀD + λI)⁻¹ DᵀF`, the unique minimizer of
//! `‖f − Dα‖² + λ‖α‖²` for every column. One Cholesky factorization of the
//! c x c Gram matrix serves the forward solve and every backward solve.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::sigmoid;
use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Matrix};
use crate::semdict::SemanticDictionary;

/// How gradients flow through the code solve during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradMode {
    /// Differentiate through the solve for every loss.
    #[default]
    Full,
    /// Cross-entropy flows through the solve; the dictionary loss sees
    /// the codes as constants.
    DicDetached,
    /// Codes are constants for every loss.
    AllDetached,
}

impl GradMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GradMode::Full => "full",
            GradMode::DicDetached => "dic_detached",
            GradMode::AllDetached => "all_detached",
        }
    }
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(GradMode::Full),
            "dic_detached" => Ok(GradMode::DicDetached),
            "all_detached" => Ok(GradMode::AllDetached),
            other => Err(Error::InvalidArgument(format!(
                "unknown grad mode `{other}` (expected full, dic_detached or all_detached)"
            ))),
        }
    }
}

/// Codes for one batch plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct CodeBatch {
    pub alpha: Matrix,
    pub probs: Matrix,
    lambda: f64,
    factor: Cholesky,
    dictionary: Matrix,
    features: Matrix,
}

impl CodeBatch {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn batch_size(&self) -> usize {
        self.alpha.cols()
    }

    /// `‖(DᵀD+λI)·α − DᵀF‖_F` and `‖DᵀF‖_F`.
    pub fn normal_residual(&self) -> Result<(f64, f64)> {
        let gram = self
            .dictionary
            .t_matmul(&self.dictionary)?
            .add_diagonal(self.lambda)?;
        let rhs = self.dictionary.t_matmul(&self.features)?;
        let resid = gram.matmul(&self.alpha)?.sub(&rhs)?.frobenius_norm();
        Ok((resid, rhs.frobenius_norm()))
    }

    /// `F − D·α`.
    fn residual(&self) -> Result<Matrix> {
        self.features.sub(&self.dictionary.matmul(&self.alpha)?)
    }

    /// Batch-mean dictionary loss at the solved codes.
    pub fn dictionary_loss(&self) -> Result<f64> {
        dictionary_loss(&self.dictionary, &self.features, &self.alpha, self.lambda)
    }
}

/// Solves the ridge codes of every feature column.
pub fn solve_codes(dict: &SemanticDictionary, features: &Matrix, lambda: f64) -> Result<CodeBatch> {
    if lambda.is_nan() || lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let d = dict.atoms();
    if features.rows() != d.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve_codes",
            left: d.shape(),
            right: features.shape(),
        });
    }
    let gram = d.t_matmul(d)?.add_diagonal(lambda)?;
    let factor = Cholesky::factor(&gram)?;
    let alpha = factor.solve(&d.t_matmul(features)?)?;
    let probs = sigmoid(&alpha);
    Ok(CodeBatch {
        alpha,
        probs,
        lambda,
        factor,
        dictionary: d.clone(),
        features: features.clone(),
    })
}

/// Label probabilities `σ((DᵀD+λI)⁻¹DᵀF)`; the same path as training.
pub fn predict(dict: &SemanticDictionary, features: &Matrix, lambda: f64) -> Result<Matrix> {
    Ok(solve_codes(dict, features, lambda)?.probs)
}

/// `mean_b ‖f_b − D·α_b‖² + λ‖α_b‖²` for arbitrary codes.
pub fn dictionary_loss(dict: &Matrix, features: &Matrix, alpha: &Matrix, lambda: f64) -> Result<f64> {
    if features.cols() != alpha.cols() || dict.cols() != alpha.rows() {
        return Err(Error::DimensionMismatch {
            op: "dictionary_loss",
            left: features.shape(),
            right: alpha.shape(),
        });
    }
    let recon = features.sub(&dict.matmul(alpha)?)?.frobenius_norm_sq();
    let reg = alpha.frobenius_norm_sq();
    Ok((recon + lambda * reg) / alpha.cols() as f64)
}

/// Upstream gradients arriving at the code solve.
#[derive(Debug, Clone)]
pub struct CodeUpstream {
    /// `dL/dα` from the classification path.
    pub codes: Matrix,
    /// Coefficient of the batch-mean dictionary loss in the objective.
    pub dic_weight: f64,
}

#[derive(Debug, Clone)]
pub struct CodeGrads {
    /// `dL/dD`, d x c.
    pub dictionary: Matrix,
    /// `dL/dF`, d x B.
    pub features: Matrix,
}

/// Gradients of `g·α(D, F)` through the solve, where `g = dL/dα`.
///
/// With `r = (DᵀD+λI)⁻¹ g`: `dF = D·r`, `dD = (F − Dα)·rᵀ − D·r·αᵀ`.
fn implicit_grads(codes: &CodeBatch, upstream: &Matrix) -> Result<CodeGrads> {
    let r = codes.factor.solve(upstream)?;
    let d = &codes.dictionary;
    let features = d.matmul(&r)?;
    let dictionary = codes
        .residual()?
        .matmul_t(&r)?
        .sub(&d.matmul(&r)?.matmul_t(&codes.alpha)?)?;
    Ok(CodeGrads {
        dictionary,
        features,
    })
}

/// Partial derivatives of the dictionary loss with the codes held fixed.
fn dictionary_loss_direct(codes: &CodeBatch, weight: f64) -> Result<CodeGrads> {
    let s = 2.0 * weight / codes.batch_size() as f64;
    let resid = codes.residual()?;
    Ok(CodeGrads {
        dictionary: resid.matmul_t(&codes.alpha)?.scale(-s)?,
        features: resid.scale(s)?,
    })
}

/// `∂L_dic/∂α`, which vanishes at the solved codes up to rounding.
fn dictionary_loss_codes(codes: &CodeBatch, weight: f64) -> Result<Matrix> {
    let s = 2.0 * weight / codes.batch_size() as f64;
    let mut g = codes.dictionary.t_matmul(&codes.residual()?)?.scale(-s)?;
    g.axpy(s * codes.lambda, &codes.alpha)?;
    Ok(g)
}

/// Backpropagates through the solve according to `mode`.
pub fn backward_codes(codes: &CodeBatch, upstream: &CodeUpstream, mode: GradMode) -> Result<CodeGrads> {
    if upstream.codes.shape() != codes.alpha.shape() {
        return Err(Error::DimensionMismatch {
            op: "backward_codes",
            left: codes.alpha.shape(),
            right: upstream.codes.shape(),
        });
    }
    let mut grads = dictionary_loss_direct(codes, upstream.dic_weight)?;
    let through = match mode {
        GradMode::Full => {
            let mut g = upstream.codes.clone();
            g.axpy(1.0, &dictionary_loss_codes(codes, upstream.dic_weight)?)?;
            Some(g)
        }
        GradMode::DicDetached => Some(upstream.codes.clone()),
        GradMode::AllDetached => None,
    };
    if let Some(g) = through {
        let implicit = implicit_grads(codes, &g)?;
        grads.dictionary.axpy(1.0, &implicit.dictionary)?;
        grads.features.axpy(1.0, &implicit.features)?;
    }
    Ok(grads)
}

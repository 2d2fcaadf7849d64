//! Central-difference gradient verification.

use std::fmt;

use super::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error per entry.
    pub rtol: f64,
    /// Denominator floor, so entries where both gradients are ~0 are
    /// compared on an absolute scale.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            rtol: 1e-4,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rtol: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| !b.passed)
            .map(|b| b.name.as_str())
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn block(&self, name: &str) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradient check (rtol {:e})", self.rtol)?;
        for b in &self.blocks {
            writeln!(
                f,
                "  {:<24} max_rel {:.3e} at [{}] analytic {:+.6e} numeric {:+.6e} {}",
                b.name,
                b.max_rel_error,
                b.worst_index,
                b.analytic,
                b.numeric,
                if b.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn perturbed(value: &Matrix, idx: usize, delta: f64) -> Matrix {
    let mut data = value.as_slice().to_vec();
    data[idx] += delta;
    Matrix::from_fn(value.rows(), value.cols(), |r, c| data[r * value.cols() + c])
}

/// Compares the gradients `objective` accumulates into `params` against
/// central differences of the loss it returns.
///
/// The objective must compute the loss for the current parameter values
/// and add its analytic gradient into the store's gradient buffers. The
/// store is restored to its original values on return.
pub fn grad_check<F>(
    mut objective: F,
    params: &mut ParamStore,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    params.zero_grads();
    let first = objective(params)?;
    let analytic: Vec<(String, Matrix)> = params
        .iter()
        .map(|(n, p)| (n.to_string(), p.grad.clone()))
        .collect();
    params.zero_grads();
    let second = objective(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut blocks = Vec::with_capacity(analytic.len());
    for (name, grad) in analytic {
        let original = params.value(&name)?.clone();
        let mut worst = BlockReport {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            passed: true,
        };
        for idx in 0..original.as_slice().len() {
            params.set_value(&name, perturbed(&original, idx, cfg.step))?;
            let plus = objective(params)?;
            params.set_value(&name, perturbed(&original, idx, -cfg.step))?;
            let minus = objective(params)?;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = grad.as_slice()[idx];
            let denom = a.abs().max(numeric.abs()).max(cfg.abs_floor);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.max_rel_error || !rel.is_finite() {
                worst.max_rel_error = rel;
                worst.worst_index = idx;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        params.set_value(&name, original)?;
        worst.passed = worst.max_rel_error <= cfg.rtol;
        blocks.push(worst);
    }
    params.zero_grads();
    Ok(GradCheckReport {
        rtol: cfg.rtol,
        blocks,
    })
}

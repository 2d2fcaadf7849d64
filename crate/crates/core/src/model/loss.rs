use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Binary cross-entropy value and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub value: f64,
    /// `(σ(α) − y) / B`.
    pub grad: Matrix,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Rejects label matrices with entries other than 0 and 1.
pub fn check_binary(labels: &Matrix) -> Result<()> {
    for s in 0..labels.cols() {
        for c in 0..labels.rows() {
            let v = labels.get(c, s);
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryLabel {
                    sample: s,
                    class: c,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Batch mean over samples of the class-summed binary cross-entropy of
/// `σ(alpha)` against `labels`, evaluated on logits as
/// `softplus(α) − y·α`.
pub fn ce_loss(alpha: &Matrix, labels: &Matrix) -> Result<CrossEntropy> {
    if alpha.shape() != labels.shape() {
        return Err(Error::DimensionMismatch {
            op: "ce_loss",
            left: alpha.shape(),
            right: labels.shape(),
        });
    }
    check_binary(labels)?;
    let batch = alpha.cols() as f64;
    let mut value = 0.0;
    for (&a, &y) in alpha.as_slice().iter().zip(labels.as_slice()) {
        value += softplus(a) - y * a;
    }
    let grad = Matrix::from_fn(alpha.rows(), alpha.cols(), |r, c| {
        (crate::diffcore::sigmoid_scalar(alpha.get(r, c)) - labels.get(r, c)) / batch
    });
    Ok(CrossEntropy {
        value: value / batch,
        grad,
    })
}

/// `L_total = (L_ce + β·L_dic) / max(L_sim, floor)` with its partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub d_ce: f64,
    pub d_dic: f64,
    /// Zero while the floor is active.
    pub d_sim: f64,
}

pub fn total_loss(ce: f64, dic: f64, sim: f64, beta: f64, sim_floor: f64) -> TotalLoss {
    let numerator = ce + beta * dic;
    let clamped = sim <= sim_floor;
    let divisor = if clamped { sim_floor } else { sim };
    TotalLoss {
        value: numerator / divisor,
        d_ce: 1.0 / divisor,
        d_dic: beta / divisor,
        d_sim: if clamped {
            0.0
        } else {
            -numerator / (divisor * divisor)
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ce_cases() {
        let ln2 = std::f64::consts::LN_2;
        let one = ce_loss(&Matrix::zeros(1, 1), &Matrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(one.value, ln2, epsilon = 1e-15);

        let two = ce_loss(&Matrix::zeros(2, 1), &Matrix::column(&[1.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(two.value, 2.0 * ln2, epsilon = 1e-15);
        assert_abs_diff_eq!(two.value, 1.3863, epsilon = 1e-4);
        assert_eq!(two.grad.as_slice(), &[-0.5, 0.5]);

        // near-perfect logits drive the loss to zero
        let sure = ce_loss(
            &Matrix::column(&[60.0, -60.0]).unwrap(),
            &Matrix::column(&[1.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert!(sure.value < 1e-25);
    }

    #[test]
    fn ce_is_batch_mean() {
        let alpha = Matrix::from_rows(&[vec![0.3, -1.2, 2.0], vec![0.0, 0.4, -0.1]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let all = ce_loss(&alpha, &y).unwrap().value;
        let mut by_column = 0.0;
        for b in 0..3 {
            let a = alpha.select_cols(&[b]);
            let t = y.select_cols(&[b]);
            // direct probability form
            for c in 0..2 {
                let p = crate::diffcore::sigmoid_scalar(a.get(c, 0));
                let yv = t.get(c, 0);
                by_column += -(yv * p.ln() + (1.0 - yv) * (1.0 - p).ln());
            }
        }
        assert_abs_diff_eq!(all, by_column / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ce_rejects_non_binary() {
        let err = ce_loss(&Matrix::zeros(2, 1), &Matrix::column(&[1.0, 2.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonBinaryLabel { class: 1, .. }));
    }

    #[test]
    fn total_loss_cases() {
        let t = total_loss(1.0, 100.0, 0.5, 1e-4, 1e-3);
        assert_abs_diff_eq!(t.value, 2.02, epsilon = 1e-12);
        assert_abs_diff_eq!(t.d_sim, -1.01 / 0.25, epsilon = 1e-12);

        let reduced = total_loss(0.7, 55.0, 1.0, 0.0, 1e-3);
        assert_eq!(reduced.value, 0.7);

        let floored = total_loss(1.0, 0.0, -0.2, 1e-4, 1e-3);
        assert_abs_diff_eq!(floored.value, 1000.0, epsilon = 1e-9);
        assert_eq!(floored.d_sim, 0.0);
    }
}

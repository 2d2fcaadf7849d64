//! Dense row-major matrices and a Cholesky solver.
//!
//! Every fallible operation checks its output for NaN/Inf and reports
//! [`Error::NonFinite`] instead of letting a bad value propagate.

use std::fmt;

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry in [`solve_spd`].
pub const SYMMETRY_RTOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        check_finite("from_vec", &data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Matrix::from_vec(n, m, rows.concat())
    }

    /// Builds an `n x 1` column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for in-place kernels. Callers are responsible for
    /// keeping entries finite.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Sets a single entry. Rejects non-finite values.
    pub fn set(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "set" });
        }
        self.data[r * self.cols + c] = v;
        Ok(())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Selects the given columns, in order.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |r, j| self.get(r, idx[j]))
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), self.cols, |i, c| self.get(idx[i], c))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let orow = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        check_finite("matmul", &out)?;
        Ok(Matrix {
            rows: n,
            cols: p,
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        self.transpose().matmul(other)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        self.matmul(&other.transpose())
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(op, &data)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        self.map("scale", |v| v * s)
    }

    /// Applies `f` elementwise, failing if any output is non-finite.
    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        check_finite(op, &data)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "axpy",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        check_finite("axpy", &self.data)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Sum over columns, giving an `rows x 1` vector.
    pub fn row_sums(&self) -> Matrix {
        Matrix::from_fn(self.rows, 1, |r, _| self.row(r).iter().sum())
    }

    /// Adds `lambda` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&self, lambda: f64) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += lambda;
        }
        check_finite("add_diagonal", &out.data)?;
        Ok(out)
    }

    /// Adds a column vector to every column.
    pub fn add_column_broadcast(&self, column: &Matrix) -> Result<Matrix> {
        if column.cols != 1 || column.rows != self.rows {
            return Err(Error::DimensionMismatch {
                op: "add_column_broadcast",
                left: self.shape(),
                right: column.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let b = column.data[r];
            for v in &mut out.data[r * self.cols..(r + 1) * self.cols] {
                *v += b;
            }
        }
        check_finite("add_column_broadcast", &out.data)?;
        Ok(out)
    }

    /// Rounds every entry to the nearest `f32` and widens it back.
    pub fn round_to_f32(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `m = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric positive-definite matrix.
    pub fn factor(m: &Matrix) -> Result<Cholesky> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        let n = rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m.get(i, j), m.get(j, i));
                let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if diag.is_nan() || diag <= 0.0 || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L·Lᵀ·X = rhs` by forward then backward substitution.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.n;
        if rhs.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "cholesky_solve",
                left: (n, n),
                right: rhs.shape(),
            });
        }
        let p = rhs.cols();
        let l = &self.lower;
        let mut x = rhs.clone();
        let xs = x.as_mut_slice();
        for col in 0..p {
            for i in 0..n {
                let mut s = xs[i * p + col];
                for k in 0..i {
                    s -= l[i * n + k] * xs[k * p + col];
                }
                xs[i * p + col] = s / l[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = xs[i * p + col];
                for k in (i + 1)..n {
                    s -= l[k * n + i] * xs[k * p + col];
                }
                xs[i * p + col] = s / l[i * n + i];
            }
        }
        check_finite("cholesky_solve", x.as_slice())?;
        Ok(x)
    }
}

/// Solves `m·X = rhs` for symmetric positive-definite `m`.
pub fn solve_spd(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if m.rows() != m.cols() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Cholesky::factor(m)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.push(s);
            }
        }
        out
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let a = random(rng, n, n);
        a.t_matmul(&a).unwrap().add_diagonal(n as f64 * 0.5).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 3, 3);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn hand_matmul() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::column(&[1.0, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 5, 4);
        let b = random(&mut rng, 4, 3);
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.as_slice().iter().zip(naive_matmul(&a, &b)) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&a),
            Err(Error::DimensionMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn transpose_cases() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.transpose().as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(a.transpose().transpose(), a);
        let row = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(row.transpose().shape(), (4, 1));
    }

    #[test]
    fn solve_identity_and_scalar() {
        let b = Matrix::column(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap(), b);
        let two = Matrix::identity(3).scale(2.0).unwrap();
        // the factor of 2I is sqrt(2)I, so allow rounding
        let x = solve_spd(&two, &b).unwrap();
        let err = x.sub(&b.scale(0.5).unwrap()).unwrap().frobenius_norm();
        assert!(err < 1e-15, "{err}");
    }

    #[test]
    fn solve_two_by_two_against_cramer() {
        let m = Matrix::from_rows(&[vec![2.5, 1.0], vec![1.0, 2.5]]).unwrap();
        let rhs = Matrix::column(&[4.0, 5.0]).unwrap();
        // Cramer's rule
        let det = 2.5 * 2.5 - 1.0 * 1.0;
        let x0 = (4.0 * 2.5 - 1.0 * 5.0) / det;
        let x1 = (2.5 * 5.0 - 1.0 * 4.0) / det;
        let x = solve_spd(&m, &rhs).unwrap();
        assert_abs_diff_eq!(x.get(0, 0), x0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.get(1, 0), x1, epsilon = 1e-12);
        assert_abs_diff_eq!(x0, 0.952381, epsilon = 1e-6);
        assert_abs_diff_eq!(x1, 1.619048, epsilon = 1e-6);
    }

    #[test]
    fn solve_rejects_bad_inputs() {
        let rhs = Matrix::column(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_spd(&Matrix::zeros(2, 3), &rhs),
            Err(Error::NotSquare { .. })
        ));
        let nonsym = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(
            solve_spd(&nonsym, &rhs),
            Err(Error::NotSymmetric { .. })
        ));
        let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&indefinite, &rhs),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
        assert!(matches!(
            solve_spd(&Matrix::identity(3), &rhs),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_residual_large_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 17, 64, 256] {
            let m = random_spd(&mut rng, n);
            let rhs = random(&mut rng, n, 3);
            let x = solve_spd(&m, &rhs).unwrap();
            let resid = m.matmul(&x).unwrap().sub(&rhs).unwrap().frobenius_norm();
            assert!(resid <= 1e-8 * (1.0 + rhs.frobenius_norm()), "n={n} resid={resid}");
        }
    }

    #[test]
    fn elementwise_suite() {
        assert_eq!(Matrix::zeros(3, 2).frobenius_norm_sq(), 0.0);
        let a = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.frobenius_norm_sq(), 25.0);
        assert_eq!(a.sum(), 7.0);
        assert_eq!(a.hadamard(&a).unwrap().as_slice(), &[9.0, 16.0]);
        let z = a.add(&a.scale(-1.0).unwrap()).unwrap();
        assert_eq!(z, Matrix::zeros(1, 2));
        assert!(a.add(&Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let a = Matrix::from_vec(1, 1, vec![f64::MAX]).unwrap();
        assert!(matches!(a.scale(10.0), Err(Error::NonFinite { .. })));
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        let mut b = Matrix::zeros(1, 1);
        assert!(b.set(0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn deterministic_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 30, 20);
        let b = random(&mut rng, 20, 10);
        let x = a.matmul(&b).unwrap();
        let y = a.matmul(&b).unwrap();
        assert!(x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, p in 1usize..8, q in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, n, m);
            let b = random(&mut rng, m, p);
            let c = random(&mut rng, p, q);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let err = left.sub(&right).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-10 * left.frobenius_norm().max(1e-300) || err < 1e-14);
        }

        #[test]
        fn spd_residual_bound(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_spd(&mut rng, n);
            let rhs = random(&mut rng, n, 2);
            let x = solve_spd(&m, &rhs).unwrap();
            let resid = m.matmul(&x).unwrap().sub(&rhs).unwrap().frobenius_norm();
            prop_assert!(resid <= 1e-8 * (1.0 + rhs.frobenius_norm()));
        }
    }
}

//! Dense Hermitian kernels with explicit failure semantics.
//!
//! The factorizations here are generic over `f64` and `Complex64`, so the
//! same code backs the complex noise-covariance solves and the real Fisher
//! matrix inversion.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Lower Cholesky factor `L` with `M = L Lᴴ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T: ComplexField<RealField = f64>> {
    l: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> Cholesky<T> {
    /// Factors a Hermitian positive definite matrix. Only the lower triangle
    /// of `m` is read.
    pub fn new(m: &DMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                m.ncols()
            )));
        }
        let mut l = m.clone();
        let data = l.as_mut_slice();
        for j in 0..n {
            // Left-looking update of column j using the finished columns.
            let (done, rest) = data.split_at_mut(j * n);
            let col_j = &mut rest[j..n];
            for k in 0..j {
                let col_k = &done[k * n + j..k * n + n];
                let ljk = col_k[0].conjugate();
                if ljk == T::zero() {
                    continue;
                }
                for (a, &b) in col_j.iter_mut().zip(col_k) {
                    *a -= b * ljk;
                }
            }
            let d = col_j[0].real();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let s = d.sqrt();
            col_j[0] = T::from_real(s);
            let inv = T::from_real(1.0 / s);
            for a in col_j[1..].iter_mut() {
                *a *= inv;
            }
            for a in rest[..j].iter_mut() {
                *a = T::zero();
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `M X = B` column by column.
    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        let mut x = rhs.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut DMatrix<T>) {
        assert_eq!(x.nrows(), self.dim(), "rhs row count must match factor");
        let n = self.dim();
        let l = self.l.as_slice();
        for mut col in x.column_iter_mut() {
            let b = col.as_mut_slice();
            // L y = b
            for k in 0..n {
                let lk = &l[k * n + k..k * n + n];
                let yk = b[k] / lk[0];
                b[k] = yk;
                for (bi, &li) in b[k + 1..].iter_mut().zip(&lk[1..]) {
                    *bi -= li * yk;
                }
            }
            // Lᴴ x = y
            for k in (0..n).rev() {
                let lk = &l[k * n + k..k * n + n];
                let mut acc = b[k];
                for (&bi, &li) in b[k + 1..].iter().zip(&lk[1..]) {
                    acc -= li.conjugate() * bi;
                }
                b[k] = acc / lk[0];
            }
        }
    }

    /// `ln det M = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].real().ln()).sum::<f64>()
    }

    /// `(max L_ii / min L_ii)²`, a cheap lower bound on the 2-norm condition
    /// number. Exact for diagonal matrices.
    pub fn condition_estimate(&self) -> f64 {
        let (lo, hi) = (0..self.dim())
            .map(|i| self.l[(i, i)].real())
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if self.dim() == 0 {
            return 1.0;
        }
        (hi / lo).powi(2)
    }

    pub fn inverse(&self) -> DMatrix<T> {
        let mut inv = DMatrix::<T>::identity(self.dim(), self.dim());
        self.solve_in_place(&mut inv);
        inv
    }
}

pub fn chol_hermitian(m: &CMatrix) -> Result<Cholesky<Complex64>> {
    Cholesky::new(m)
}

pub fn solve_hermitian(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    Ok(Cholesky::new(m)?.solve(rhs))
}

pub fn logdet_hermitian(m: &CMatrix) -> Result<f64> {
    Ok(Cholesky::new(m)?.log_det())
}

pub fn condition_estimate(m: &CMatrix) -> Result<f64> {
    Ok(Cholesky::new(m)?.condition_estimate())
}

/// Largest absolute deviation from Hermitian symmetry relative to the largest entry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Hadamard (element-wise) product.
pub fn hadamard(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.component_mul(b)
}

/// `diag(u)ᴴ · M · diag(w)`, i.e. entry `(i, j)` scaled by `conj(u_i) w_j`.
pub fn scale_rows_cols(m: &CMatrix, left: Option<&[Complex64]>, right: Option<&[Complex64]>) -> CMatrix {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            let mut v = out[(i, j)];
            if let Some(u) = left {
                v *= u[i].conj();
            }
            if let Some(w) = right {
                v *= w[j];
            }
            out[(i, j)] = v;
        }
    }
    out
}

pub fn frobenius(m: &RMatrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

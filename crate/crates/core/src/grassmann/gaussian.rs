//! Gaussian forms `e^{−S_A}` and their closed-form algebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};

use super::form::{heat, Form};
use super::smooth::SmoothForm;

/// `e^{−S_A}` for a matrix `A` with positive-definite Hermitian part.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianForm {
    a: DMatrix<C64>,
}

/// Smallest eigenvalue of the Hermitian part `(A + A*)/2`.
pub fn hermitian_part_min_eigenvalue(a: &DMatrix<C64>) -> f64 {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn inverse(a: &DMatrix<C64>, what: &str) -> Result<DMatrix<C64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} is not invertible")))
}

pub fn to_rows(a: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<C64>]) -> DMatrix<C64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

impl GaussianForm {
    pub fn new(a: DMatrix<C64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Input("matrix must be square and nonempty".into()));
        }
        let m = hermitian_part_min_eigenvalue(&a);
        if m <= 0.0 {
            return Err(Error::Domain(format!(
                "matrix does not have positive real part (min eigenvalue {m:e})"
            )));
        }
        Ok(GaussianForm { a })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn nsites(&self) -> usize {
        self.a.nrows()
    }

    /// `C = A^{-1}`.
    pub fn covariance(&self) -> Result<DMatrix<C64>> {
        inverse(&self.a, "A")
    }

    pub fn to_smooth(&self) -> SmoothForm {
        SmoothForm::exp_neg_action(&to_rows(&self.a))
    }
}

/// Integrates out every site outside `keep`: `A_u = ((A^{-1})|_keep)^{-1}`.
pub fn gaussian_partial_integrate(g: &GaussianForm, keep: &[usize]) -> Result<GaussianForm> {
    let n = g.nsites();
    if keep.is_empty() || keep.iter().any(|&k| k >= n) {
        return Err(Error::Input("keep must be a nonempty subset of the sites".into()));
    }
    let c = g.covariance()?;
    let ck = DMatrix::from_fn(keep.len(), keep.len(), |i, j| c[(keep[i], keep[j])]);
    GaussianForm::new(inverse(&ck, "restricted covariance")?)
}

/// `μ_A ∗ μ_B = μ_C` with `C^{-1} = A^{-1} + B^{-1}` (returned as the Gaussian of `C`).
pub fn gaussian_convolve(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<GaussianForm> {
    let ga = GaussianForm::new(a.clone())?;
    let gb = GaussianForm::new(b.clone())?;
    let sum = ga.covariance()? + gb.covariance()?;
    GaussianForm::new(inverse(&sum, "sum of inverses")?)
}

/// Exact fluctuation convolution `e^{Δ_Γ} F` of a polynomial form.
pub fn mu_convolve_poly<C: Scalar>(f: &Form<C>, cov: &dyn Fn(usize, usize) -> C) -> Form<C> {
    heat(f, cov)
}

/// `∫ e^{−S_A} F` for polynomial `F`, as `(e^{Δ}F)(0)`.
///
/// `cov(x, y)` must be the pairing `∫ e^{−S_A} φ_x φ̄_y = (A^{-1})_{yx}`.
/// Parameters of `F` survive in the result.
pub fn gaussian_expectation<C: Scalar>(f: &Form<C>, cov: &dyn Fn(usize, usize) -> C) -> Form<C> {
    heat(f, cov).field_constant()
}

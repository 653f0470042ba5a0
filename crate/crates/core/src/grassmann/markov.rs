//! Both sides of the τ-isomorphism on one or two sites.
//!
//! For a killed Markov generator `−A`, the form side is
//! `∫ e^{−S_A} F(τ) φ_a φ̄_b` and the walk side is the Feynman–Kac
//! resolvent, evaluated in closed form where one is available.
//!
//! With `S_A = Σ φ_x A_{xy} φ̄_y`, the form side equals the walk started at
//! `b` and stopped at `a`, `(A − iK)^{-1}_{ba}`; the two index orders agree
//! for reversible (symmetric) generators.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quad::half_line;
use crate::scalar::C64;

use super::form::Form;
use super::smooth::{integrate, ExpPoly, QuadOptions, ScalarFunction, SmoothForm};

/// Observable `F(τ)` for which the walk side has an independent evaluation.
#[derive(Clone)]
pub enum TauObservable {
    /// `F = 1`: walk side `(A^{-1})_{ba}`.
    One,
    /// `F = exp(i Σ_x k_x τ_x)`: walk side `(A − iK)^{-1}_{ba}`.
    Fourier(Vec<f64>),
    /// One site, bounded `F`: walk side `∫_0^∞ e^{−aT} F(T) dT`.
    Single(Arc<dyn ScalarFunction>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauIsoReport {
    pub lhs: C64,
    pub rhs: C64,
    pub diff: f64,
}

fn check_generator(a: &DMatrix<C64>) -> Result<()> {
    let n = a.nrows();
    if n == 0 || n > 2 || a.ncols() != n {
        return Err(Error::Input("generator must be square with one or two sites".into()));
    }
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let v = a[(i, j)];
            if v.im != 0.0 {
                return Err(Error::Input("generator must be real".into()));
            }
            if i != j && v.re > 0.0 {
                return Err(Error::Input("off-diagonal entries of A must be ≤ 0".into()));
            }
            row += v.re;
        }
        if row < 0.0 {
            return Err(Error::Input("row sums of A must be ≥ 0".into()));
        }
    }
    Ok(())
}

fn walk_side(a: &DMatrix<C64>, f: &TauObservable, site_a: usize, site_b: usize) -> Result<C64> {
    let n = a.nrows();
    match f {
        TauObservable::One | TauObservable::Fourier(_) => {
            let mut m = a.clone();
            if let TauObservable::Fourier(k) = f {
                for x in 0..n {
                    m[(x, x)] -= C64::new(0.0, k[x]);
                }
            }
            let inv = m
                .try_inverse()
                .ok_or_else(|| Error::Singular("A − iK is not invertible".into()))?;
            Ok(inv[(site_b, site_a)])
        }
        TauObservable::Single(func) => {
            let rate = a[(0, 0)].re;
            if rate <= 0.0 {
                return Err(Error::Domain("one-site walk needs positive killing".into()));
            }
            let bound = 1.0_f64.max(func.derivatives(C64::new(0.0, 0.0), 0)[0].norm());
            let g = |t: f64| (-rate * t).exp() * func.derivatives(C64::new(t, 0.0), 0)[0];
            let tail = |t: f64| bound * (-rate * t).exp() / rate;
            Ok(half_line(&g, &tail, 1e-12))
        }
    }
}

fn form_side(
    a: &DMatrix<C64>,
    f: &TauObservable,
    site_a: usize,
    site_b: usize,
    opts: &QuadOptions,
) -> Result<C64> {
    let n = a.nrows();
    let rows: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let mut integrand = SmoothForm::exp_neg_action(&rows);
    match f {
        TauObservable::One => {}
        TauObservable::Fourier(k) => {
            for (x, kx) in k.iter().enumerate() {
                let fx = SmoothForm::f_of_tau_site(n, Arc::new(ExpPoly::linear(C64::new(0.0, *kx))), x);
                integrand = integrand.wedge(&fx)?;
            }
        }
        TauObservable::Single(func) => {
            integrand = integrand.wedge(&SmoothForm::f_of_tau_site(n, func.clone(), 0))?;
        }
    }
    let pp = Form::<C64>::phi(n, 0, site_a).wedge(&Form::phibar(n, 0, site_b))?;
    Ok(integrate(&integrand.wedge_poly(&pp)?, opts)?.value)
}

/// Evaluates both sides of the τ-isomorphism for `A = −(generator)`.
pub fn tau_isomorphism_check(
    a: &DMatrix<C64>,
    f: &TauObservable,
    site_a: usize,
    site_b: usize,
) -> Result<TauIsoReport> {
    check_generator(a)?;
    let n = a.nrows();
    if site_a >= n || site_b >= n {
        return Err(Error::Input("sites out of range".into()));
    }
    match f {
        TauObservable::Fourier(k) if k.len() != n => {
            return Err(Error::Input("one wave number per site is required".into()));
        }
        TauObservable::Single(_) if n != 1 => {
            return Err(Error::Input("general F is supported on one site only".into()));
        }
        _ => {}
    }
    let rhs = walk_side(a, f, site_a, site_b)?;
    let lhs = form_side(a, f, site_a, site_b, &QuadOptions::default())?;
    Ok(TauIsoReport {
        lhs,
        rhs,
        diff: (lhs - rhs).norm(),
    })
}

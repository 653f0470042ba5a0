//! Supersymmetry operators `d`, `i_X`, `Q = d + i_X` and `ℒ_X`, and functions of `τ`.
//!
//! With `ψ = s^{-1} dφ`, `s = (2πi)^{1/2}`, every operator is `s^k` times an
//! `s`-free operator on the `(φ, ψ)` coordinates:
//! `d = s·d̂` with `d̂φ = ψ`, `i_X = s·î` with `îψ = −φ`, `îψ̄ = φ̄`, and
//! `ℒ_X = s²·L̂` where `L̂` counts `−1` per `φ, ψ` and `+1` per `φ̄, ψ̄`.

use crate::error::{Error, Result};
use crate::scalar::{Scalar, SusyScalar};

use super::form::{phi_var, phibar_var, psi_bit, psibar_bit, wedge_sign, Form, Mask};

/// `d̂`: `φ_x ↦ ψ_x`, `φ̄_x ↦ ψ̄_x`, extended as an antiderivation.
pub fn d_hat<C: Scalar>(f: &Form<C>) -> Form<C> {
    let n = f.nsites();
    let mut out = Form::zero(n, f.nparams());
    for (m, e, c) in f.terms() {
        for x in 0..n {
            for (v, g) in [(phi_var(x), psi_bit(x)), (phibar_var(x), psibar_bit(x))] {
                if e[v] == 0 {
                    continue;
                }
                let Some(neg) = wedge_sign(1u128 << g, m) else {
                    continue;
                };
                let mut e2 = e.clone();
                e2[v] -= 1;
                let k = c.mul_ref(&C::from_i64(i64::from(e[v])));
                out.add_term(m | (1u128 << g), e2, if neg { -k } else { k });
            }
        }
    }
    out
}

/// `î`: `ψ_x ↦ −φ_x`, `ψ̄_x ↦ φ̄_x`, extended as an antiderivation.
pub fn i_hat<C: Scalar>(f: &Form<C>) -> Form<C> {
    let mut out = Form::zero(f.nsites(), f.nparams());
    for (m, e, c) in f.terms() {
        let mut rest: Mask = m;
        let mut before = 0u32;
        while rest != 0 {
            let g = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let x = g / 2;
            let (v, base_neg) = if g % 2 == 0 {
                (phi_var(x), true)
            } else {
                (phibar_var(x), false)
            };
            let neg = base_neg ^ (before % 2 == 1);
            let mut e2 = e.clone();
            e2[v] += 1;
            out.add_term(m & !(1u128 << g), e2, if neg { -c.clone() } else { c.clone() });
            before += 1;
        }
    }
    out
}

/// `L̂`: multiplies each monomial by its charge.
pub fn charge<C: Scalar>(f: &Form<C>) -> Form<C> {
    let n = f.nsites();
    let mut out = Form::zero(n, f.nparams());
    for (m, e, c) in f.terms() {
        let mut q: i64 = 0;
        for x in 0..n {
            q += i64::from(e[phibar_var(x)]) - i64::from(e[phi_var(x)]);
            q += i64::from((m >> psibar_bit(x)) & 1 == 1) - i64::from((m >> psi_bit(x)) & 1 == 1);
        }
        out.add_term(m, e.clone(), c.mul_ref(&C::from_i64(q)));
    }
    out
}

/// `Q̂ = d̂ + î`, so that `Q = s·Q̂`.
pub fn q_hat<C: Scalar>(f: &Form<C>) -> Form<C> {
    d_hat(f).plus(&i_hat(f)).expect("same shape")
}

pub fn exterior_d<C: SusyScalar>(f: &Form<C>) -> Form<C> {
    d_hat(f).scale(&C::sqrt_two_pi_i())
}

pub fn interior_x<C: SusyScalar>(f: &Form<C>) -> Form<C> {
    i_hat(f).scale(&C::sqrt_two_pi_i())
}

pub fn susy_q<C: SusyScalar>(f: &Form<C>) -> Form<C> {
    q_hat(f).scale(&C::sqrt_two_pi_i())
}

/// Lie derivative along `X`, computed directly from the flow `φ ↦ e^{−2πit}φ`.
pub fn lie_x<C: SusyScalar>(f: &Form<C>) -> Form<C> {
    let s = C::sqrt_two_pi_i();
    charge(f).scale(&s.mul_ref(&s))
}

/// `dφ_x = s·ψ_x` as a form.
pub fn d_phi<C: SusyScalar>(nsites: usize, nparams: usize, x: usize) -> Form<C> {
    Form::psi(nsites, nparams, x).scale(&C::sqrt_two_pi_i())
}

/// `dφ̄_x = s·ψ̄_x` as a form.
pub fn d_phibar<C: SusyScalar>(nsites: usize, nparams: usize, x: usize) -> Form<C> {
    Form::psibar(nsites, nparams, x).scale(&C::sqrt_two_pi_i())
}

/// `f(τ_x) = Σ_k c_k τ_x^k` for a polynomial `f`.
pub fn f_of_tau_poly<C: Scalar>(coeffs: &[C], nsites: usize, nparams: usize, x: usize) -> Form<C> {
    let t = Form::tau(nsites, nparams, x);
    let mut out = Form::zero(nsites, nparams);
    let mut pw = Form::constant(nsites, nparams, C::one());
    for c in coeffs {
        out = out.plus(&pw.scale(c)).expect("same shape");
        pw = pw.wedge(&t).expect("same shape");
    }
    out
}

/// `f(Σ_x w_x τ_x)` for a polynomial `f`.
pub fn f_of_weighted_tau<C: Scalar>(coeffs: &[C], weights: &[C], nparams: usize) -> Form<C> {
    let n = weights.len();
    let mut arg = Form::zero(n, nparams);
    for (x, w) in weights.iter().enumerate() {
        arg = arg.plus(&Form::tau(n, nparams, x).scale(w)).expect("same shape");
    }
    let mut out = Form::zero(n, nparams);
    let mut pw = Form::constant(n, nparams, C::one());
    for c in coeffs {
        out = out.plus(&pw.scale(c)).expect("same shape");
        pw = pw.wedge(&arg).expect("same shape");
    }
    out
}

/// Recovers `f` with `F = f(τ)` for an even supersymmetric one-site form.
///
/// Coefficients may themselves depend on the parameters of `F`; they are
/// returned as parameter-only forms on one site.
pub fn collapse_to_tau<C: Scalar>(f: &Form<C>) -> Result<Vec<Form<C>>> {
    if f.nsites() != 1 {
        return Err(Error::Input("collapse_to_tau needs a one-site form".into()));
    }
    if !f.is_even() {
        return Err(Error::Input("form is not even".into()));
    }
    if !q_hat(f).is_zero() {
        return Err(Error::Input("form is not supersymmetric".into()));
    }
    let np = f.nparams();
    let mut coeffs: Vec<Form<C>> = Vec::new();
    for (m, e, c) in f.terms() {
        if m != 0 {
            continue;
        }
        if e[0] != e[1] {
            return Err(Error::Input("0-form part is not a function of |φ|²".into()));
        }
        let k = usize::from(e[0]);
        if coeffs.len() <= k {
            coeffs.resize_with(k + 1, || Form::zero(1, np));
        }
        let mut e2 = e.clone();
        e2[0] = 0;
        e2[1] = 0;
        coeffs[k].add_term(0, e2, c.clone());
    }
    let mut rebuilt = Form::zero(1, np);
    let t = Form::tau(1, np, 0);
    let mut pw = Form::constant(1, np, C::one());
    for c in &coeffs {
        rebuilt = rebuilt.plus(&pw.wedge(c)?)?;
        pw = pw.wedge(&t)?;
    }
    if rebuilt != *f {
        return Err(Error::Input("form is not a function of τ".into()));
    }
    Ok(coeffs)
}

/// Scalar coefficients of `f` for a parameter-free form.
pub fn collapse_to_tau_scalar<C: Scalar>(f: &Form<C>) -> Result<Vec<C>> {
    Ok(collapse_to_tau(f)?.iter().map(|c| c.scalar_value()).collect())
}

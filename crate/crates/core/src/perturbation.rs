//! Exact second-order perturbation theory on one `𝒢₁` block.
//!
//! Forms carry one symbolic parameter `γ` (index [`GAMMA`]) for the
//! observable, truncated at first order. Block computations double the
//! site set for the cross-Laplacian, so they need `2·L⁴ ≤ 64`, i.e. `L = 2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::freegreen::GammaCov;
use crate::grassmann::form::{collapse, double, heat_with_time, laplacian, merge_doubled, MAX_SITES};
use crate::grassmann::{collapse_to_tau, Form};
use crate::hierlattice::DIM;
use crate::scalar::{Scalar, C64};

/// Parameter index of the observable coupling `γ`.
pub const GAMMA: usize = 0;

/// Block interaction `v`: `λτ_y² + ντ_y` on every site, plus the observable
/// `−γ(b₀ + b₁φ₀φ̄_s + b₂τ₀φ₀φ̄₀ + b₃τ₀)` at the origin, `s = obs_site`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction<C> {
    pub lambda: C,
    pub nu: C,
    pub b: [C; 4],
    pub obs_site: usize,
}

impl<C: Scalar> Interaction<C> {
    /// `λτ²` with no observable.
    pub fn quartic(lambda: C) -> Self {
        Interaction {
            lambda,
            nu: C::zero(),
            b: [C::zero(), C::zero(), C::zero(), C::zero()],
            obs_site: 0,
        }
    }

    pub fn with_observable(mut self, b: [C; 4]) -> Self {
        self.b = b;
        self
    }

    pub fn with_obs_site(mut self, s: usize) -> Self {
        self.obs_site = s;
        self
    }

    /// `v_x` on an `n`-site block, with parameter `γ`.
    pub fn site_form(&self, n: usize, x: usize) -> Form<C> {
        let t = Form::tau(n, 1, x);
        let mut v = t.wedge(&t).expect("same shape").scale(&self.lambda);
        v = v.plus(&t.scale(&self.nu)).expect("same shape");
        if x == 0 {
            let pp = Form::phi(n, 1, 0).wedge(&Form::phibar(n, 1, 0)).expect("same shape");
            let pps = Form::phi(n, 1, 0).wedge(&Form::phibar(n, 1, self.obs_site)).expect("same shape");
            let obs = Form::constant(n, 1, self.b[0].clone())
                .plus(&pps.scale(&self.b[1]))
                .and_then(|o| o.plus(&t.wedge(&pp)?.scale(&self.b[2])))
                .and_then(|o| o.plus(&t.scale(&self.b[3])))
                .expect("same shape");
            let g = Form::param(n, 1, GAMMA);
            v = v.minus(&g.wedge(&obs).expect("same shape")).expect("same shape");
        }
        v
    }

    /// `V = Σ_{y ∈ block} v_y`.
    pub fn block_form(&self, n: usize) -> Result<Form<C>> {
        if self.obs_site >= n {
            return Err(Error::Input("observable site lies outside the block".into()));
        }
        let mut v = Form::zero(n, 1);
        for x in 0..n {
            v = v.plus(&self.site_form(n, x))?;
        }
        Ok(v)
    }
}

/// Outcome of one second-order step.
#[derive(Clone, Debug, PartialEq)]
pub struct PTResult<C> {
    pub lambda_tilde: C,
    /// Coefficient of `τ` in `𝒮V̂₁`.
    pub nu_tilde: C,
    /// `L²β + ν̃`.
    pub beta_tilde: C,
    /// `(b̃₀, b̃₁, b̃₂)`.
    pub b_tilde: [C; 3],
    pub b3_tilde: C,
    /// Coefficient of `−γτ²`; like `b₃` it never reaches the Green's function.
    pub obs_tau2: C,
    /// `𝒮V̂₁` with `γ` symbolic.
    pub scaled: Form<C>,
    /// Degree-six part of `V̂₁` before scaling.
    pub residual: Form<C>,
}

fn block_sites(l: u32) -> Result<usize> {
    let n = (l as usize).pow(DIM);
    if 2 * n > MAX_SITES {
        return Err(Error::Input(format!(
            "exact block computation needs 2·L⁴ ≤ {MAX_SITES} sites (L = 2); got L = {l}"
        )));
    }
    Ok(n)
}

fn block_cov<C: Scalar>(g: &GammaCov<C>) -> impl Fn(usize, usize) -> C + '_ {
    move |a, b| g.between(a, b)
}

fn inv_factorial<C: Scalar>(k: u32) -> C {
    let f: i64 = (1..=i64::from(k)).product();
    C::ratio(1, f)
}

/// `Δ_Γ F` on the block.
pub fn laplacian_gamma<C: Scalar>(f: &Form<C>, gamma: &GammaCov<C>) -> Form<C> {
    laplacian(f, &block_cov(gamma))
}

/// `V_t = e^{tΔ_Γ}V`, with `t` the given symbolic parameter or `t = 1`.
pub fn heat_flow<C: Scalar>(v: &Form<C>, cov: &dyn Fn(usize, usize) -> C, t: Option<usize>) -> Form<C> {
    heat_with_time(v, cov, t)
}

/// `[X Δ↔^j Y]_{j = 1, 2, …}` until the contraction vanishes.
///
/// When `gamma_trunc` is set, parameter `γ` is truncated at first order
/// after every step.
pub fn cross_powers<C: Scalar>(
    x: &Form<C>,
    y: &Form<C>,
    cov: &dyn Fn(usize, usize) -> C,
    gamma_trunc: Option<usize>,
) -> Result<Vec<Form<C>>> {
    let n = x.nsites();
    if 2 * n > MAX_SITES {
        return Err(Error::Input("too many sites for the doubled form".into()));
    }
    let trunc = |f: Form<C>| match gamma_trunc {
        Some(k) => f.truncate_param(k, 1),
        None => f,
    };
    let cross = |a: usize, b: usize| -> C {
        if (a < n) != (b < n) {
            cov(a % n, b % n)
        } else {
            C::zero()
        }
    };
    let mut d = trunc(double(x, y)?);
    let mut out = Vec::new();
    loop {
        d = trunc(laplacian(&d, &cross));
        if d.is_zero() {
            break;
        }
        out.push(merge_doubled(&d));
    }
    Ok(out)
}

/// `Q_t = ½ Σ_{j≥1} (1/j!) V_t Δ↔_{tΓ}^j V_t` with `t` the symbolic parameter `t_param`.
pub fn q_t<C: Scalar>(v_t: &Form<C>, cov: &dyn Fn(usize, usize) -> C, t_param: usize) -> Result<Form<C>> {
    let half = C::ratio(1, 2);
    let mut q = Form::zero(v_t.nsites(), v_t.nparams());
    for (i, term) in cross_powers(v_t, v_t, cov, None)?.into_iter().enumerate() {
        let j = (i + 1) as u32;
        let mut t = term.scale(&half.mul_ref(&inv_factorial::<C>(j)));
        for _ in 0..j {
            t = t.mul_var(v_t.param_var(t_param));
        }
        q = q.plus(&t)?;
    }
    Ok(q)
}

/// `ℒ[−V_t + Q_t] − ½ V_t Δ↔_Γ V_t` with `ℒ = ∂_t − Δ_Γ`; identically zero.
///
/// A time parameter is appended to `v`.
pub fn lemma_q_residual<C: Scalar>(v: &Form<C>, cov: &dyn Fn(usize, usize) -> C) -> Result<Form<C>> {
    let vp = v.with_extra_params(1);
    let t = v.nparams();
    let tv = vp.param_var(t);
    let v_t = heat_flow(&vp, cov, Some(t));
    let q = q_t(&v_t, cov, t)?;
    let w = q.minus(&v_t)?;
    let lw = w.d_var(tv).minus(&laplacian(&w, cov))?;
    let first = cross_powers(&v_t, &v_t, cov, None)?
        .into_iter()
        .next()
        .unwrap_or_else(|| Form::zero(vp.nsites(), vp.nparams()));
    lw.minus(&first.scale(&C::ratio(1, 2)))
}

/// `𝒮`: every block field `φ_y, ψ_y` becomes `L^{−1}` times the one-site field.
pub fn scale_block<C: Scalar>(f: &Form<C>, l: u32) -> Form<C> {
    collapse(f, &C::ratio(1, i64::from(l)))
}

/// Coefficients `(a, b, c, d, e)` with `f = a + bφφ̄ + cτ + dτφφ̄ + eτ²` on one site.
///
/// `f` must be parameter-free and lie in that span.
pub fn normal_coordinates<C: Scalar>(f: &Form<C>) -> Result<[C; 5]> {
    if f.nsites() != 1 || f.nparams() != 0 {
        return Err(Error::Input("expected a parameter-free one-site form".into()));
    }
    let coef = |mask: u128, p: u16| -> C {
        f.polys()
            .get(&mask)
            .and_then(|poly| poly.get(&vec![p, p]))
            .cloned()
            .unwrap_or_else(C::zero)
    };
    let a = coef(0, 0);
    let c = coef(3, 0);
    let b = coef(0, 1) - c.clone();
    let d = C::from_i64(2).mul_ref(&coef(0, 2)) - coef(3, 1);
    let e = coef(3, 1) - coef(0, 2);
    let rebuilt = normal_form(&[a.clone(), b.clone(), c.clone(), d.clone(), e.clone()]);
    if rebuilt != *f {
        return Err(Error::Numerical("form is not of the normalized shape".into()));
    }
    Ok([a, b, c, d, e])
}

/// `a + bφφ̄ + cτ + dτφφ̄ + eτ²` on one site.
pub fn normal_form<C: Scalar>(k: &[C; 5]) -> Form<C> {
    let t = Form::<C>::tau(1, 0, 0);
    let pp = Form::phi(1, 0, 0).wedge(&Form::phibar(1, 0, 0)).expect("same shape");
    let basis = [
        Form::constant(1, 0, C::one()),
        pp.clone(),
        t.clone(),
        t.wedge(&pp).expect("same shape"),
        t.wedge(&t).expect("same shape"),
    ];
    let mut out = Form::zero(1, 0);
    for (bk, ck) in basis.iter().zip(k) {
        out = out.plus(&bk.scale(ck)).expect("same shape");
    }
    out
}

fn drop_params<C: Scalar>(f: &Form<C>) -> Form<C> {
    let mut out = Form::zero(f.nsites(), 0);
    for (m, e, c) in f.terms() {
        out.add_term(m, e[..2 * f.nsites()].to_vec(), c.clone());
    }
    out
}

/// `V̂₁ = V₁ − Q₁` for the block interaction, truncated at first order in `γ`.
pub fn effective_interaction<C: Scalar>(v: &Interaction<C>, gamma: &GammaCov<C>) -> Result<Form<C>> {
    let n = block_sites(gamma.l)?;
    let cov = block_cov(gamma);
    let v1 = heat_flow(&v.block_form(n)?, &cov, None);
    let half = C::ratio(1, 2);
    let mut q1 = Form::zero(n, 1);
    for (i, term) in cross_powers(&v1, &v1, &cov, Some(GAMMA))?.into_iter().enumerate() {
        q1 = q1.plus(&term.scale(&half.mul_ref(&inv_factorial::<C>((i + 1) as u32))))?;
    }
    v1.minus(&q1)
}

/// Scales `V̂₁` and reads off `(λ̃, β̃, b̃)`.
pub fn second_order_step<C: Scalar>(v: &Interaction<C>, gamma: &GammaCov<C>) -> Result<PTResult<C>> {
    let l = gamma.l;
    let vhat = effective_interaction(v, gamma)?;
    let residual = vhat.field_degree_part(6);
    if vhat.max_field_degree() > 6 {
        return Err(Error::Numerical("effective interaction exceeds degree six".into()));
    }
    let scaled = scale_block(&vhat, l);
    if !scaled.field_degree_part(6).is_zero() {
        return Err(Error::Numerical(
            "degree-six part survives scaling (covariance does not sum to zero)".into(),
        ));
    }
    let k0 = normal_coordinates(&drop_params(&scaled.param_coefficient(GAMMA, 0)))?;
    if !k0[0].is_zero() || !k0[1].is_zero() || !k0[3].is_zero() {
        return Err(Error::Numerical("γ-free part is not a function of τ alone".into()));
    }
    let k1 = normal_coordinates(&drop_params(&scaled.param_coefficient(GAMMA, 1)))?;
    let l2 = C::from_i64(i64::from(l * l));
    Ok(PTResult {
        lambda_tilde: k0[4].clone(),
        nu_tilde: k0[2].clone(),
        beta_tilde: l2.mul_ref(&gamma.beta) + k0[2].clone(),
        b_tilde: [-k1[0].clone(), -k1[1].clone(), -k1[3].clone()],
        b3_tilde: -k1[2].clone(),
        obs_tau2: -k1[4].clone(),
        scaled,
        residual,
    })
}

/// `(b̃₀, b̃₁, b̃₂)` for an interaction carrying an observable.
pub fn observable_second_order<C: Scalar>(v: &Interaction<C>, gamma: &GammaCov<C>) -> Result<[C; 3]> {
    Ok(second_order_step(v, gamma)?.b_tilde)
}

/// One comparison in the diagram report.
#[derive(Clone, Debug, Serialize)]
pub struct DiagramCheck {
    pub id: String,
    /// Coefficients of `τ⁰, τ¹, τ², …` as `[re, im]`.
    pub expected: Vec<[f64; 2]>,
    pub computed: Vec<[f64; 2]>,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramReport {
    pub beta: [f64; 2],
    pub lambda: [f64; 2],
    pub l: u32,
    pub checks: Vec<DiagramCheck>,
}

impl DiagramReport {
    pub fn all_match(&self) -> bool {
        self.checks.iter().all(|c| c.matches)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

fn pair<C: Scalar>(c: &C) -> [f64; 2] {
    let z: C64 = c.to_c64();
    [z.re, z.im]
}

/// Polynomial in `λ` with coefficients polynomial in `τ`: `c[k][p]` multiplies `λ^k τ^p`.
type LambdaTauPoly<C> = Vec<Vec<C>>;

fn trim<C: Scalar>(p: &LambdaTauPoly<C>) -> LambdaTauPoly<C> {
    let mut out: LambdaTauPoly<C> = p
        .iter()
        .map(|row| {
            let mut row = row.clone();
            while row.last().is_some_and(|c| c.is_zero()) {
                row.pop();
            }
            row
        })
        .collect();
    while out.last().is_some_and(|row| row.is_empty()) {
        out.pop();
    }
    out
}

fn at_lambda<C: Scalar>(p: &LambdaTauPoly<C>, lambda: &C) -> Vec<[f64; 2]> {
    let width = p.iter().map(Vec::len).max().unwrap_or(0);
    (0..width)
        .map(|k| {
            let mut acc = C::zero();
            for (deg, row) in p.iter().enumerate() {
                if let Some(c) = row.get(k) {
                    acc = acc + c.mul_ref(&lambda.pow(deg as u32));
                }
            }
            pair(&acc)
        })
        .collect()
}

fn check<C: Scalar>(id: &str, expected: LambdaTauPoly<C>, computed: LambdaTauPoly<C>, lambda: &C) -> DiagramCheck {
    let expected = trim(&expected);
    let computed = trim(&computed);
    DiagramCheck {
        id: id.to_string(),
        matches: expected == computed,
        expected: at_lambda(&expected, lambda),
        computed: at_lambda(&computed, lambda),
    }
}

/// Splits a one-site form whose only parameter is `λ` into its `λ^k τ^p` coefficients.
fn lambda_tau_coefficients<C: Scalar>(f: &Form<C>) -> Result<LambdaTauPoly<C>> {
    let max_deg = f.terms().map(|(_, e, _)| e[f.param_var(0)]).max().unwrap_or(0);
    (0..=max_deg)
        .map(|k| {
            let part = drop_params(&f.param_coefficient(0, k));
            Ok(collapse_to_tau(&part)?.iter().map(|c| c.scalar_value()).collect())
        })
        .collect()
}

/// `c·λ^deg·τ^p` entries collected into a [`LambdaTauPoly`].
fn lt_poly<C: Scalar>(entries: &[(usize, usize, C)]) -> LambdaTauPoly<C> {
    let mut out: LambdaTauPoly<C> = Vec::new();
    for (deg, p, c) in entries {
        if out.len() <= *deg {
            out.resize_with(deg + 1, Vec::new);
        }
        if out[*deg].len() <= *p {
            out[*deg].resize_with(p + 1, C::zero);
        }
        out[*deg][*p] = out[*deg][*p].clone() + c.clone();
    }
    out
}

/// Recomputes the diagram sums for `v = λτ²` with `λ` symbolic and compares
/// them with their closed forms as polynomials in `λ`.
///
/// The report lists values at the given `λ`; `match` is exact polynomial equality.
pub fn verify_appendix_c<C: Scalar>(beta: &C, lambda: &C, l: u32) -> Result<DiagramReport> {
    let gamma = GammaCov::new(beta, l)?;
    let n = block_sites(l)?;
    let cov = block_cov(&gamma);
    let lam = Form::<C>::param(n, 1, 0);
    let mut v = Form::zero(n, 1);
    for x in 0..n {
        let t = Form::tau(n, 1, x);
        v = v.plus(&lam.wedge(&t.wedge(&t)?)?)?;
    }
    let v1 = heat_flow(&v, &cov, None);
    let l2 = C::from_i64(i64::from(l * l));
    let b0 = gamma.on_site.clone();
    let (b2, b3) = (gamma.moment(2), gamma.moment(3));
    let int = |k: i64| C::from_i64(k);
    let mut checks = Vec::new();

    let mut v1_expected = Form::zero(n, 1);
    for x in 0..n {
        let t = Form::tau(n, 1, x);
        let two_g0 = int(2).mul_ref(&b0);
        v1_expected = v1_expected.plus(&lam.wedge(&t.wedge(&t)?.plus(&t.scale(&two_g0))?)?)?;
    }
    let mut c = check(
        "V1",
        lambda_tau_coefficients(&scale_block(&v1_expected, l))?,
        lambda_tau_coefficients(&scale_block(&v1, l))?,
        lambda,
    );
    c.matches &= v1 == v1_expected;
    checks.push(c);

    let powers = cross_powers(&v1, &v1, &cov, None)?;
    let expected: [LambdaTauPoly<C>; 4] = [
        vec![],
        lt_poly(&[
            (2, 1, int(4).mul_ref(&b2).mul_ref(&b0).mul_ref(&l2)),
            (2, 2, int(8).mul_ref(&b2)),
        ]),
        lt_poly(&[(2, 1, int(4).mul_ref(&b3).mul_ref(&l2))]),
        vec![],
    ];
    let half = C::ratio(1, 2);
    for (j, exp) in expected.into_iter().enumerate() {
        let computed = match powers.get(j) {
            Some(p) => {
                let term = p.scale(&half.mul_ref(&inv_factorial::<C>(j as u32 + 1)));
                lambda_tau_coefficients(&scale_block(&term, l))?
            }
            None => vec![],
        };
        checks.push(check(&format!("cross_j{}", j + 1), exp, computed, lambda));
    }

    let mut q1 = Form::zero(n, 1);
    for (i, p) in powers.iter().enumerate() {
        q1 = q1.plus(&p.scale(&half.mul_ref(&inv_factorial::<C>(i as u32 + 1))))?;
    }
    let scaled = lambda_tau_coefficients(&scale_block(&v1.minus(&q1)?, l))?;
    let coeff = |deg: usize, p: usize| -> C {
        scaled.get(deg).and_then(|r| r.get(p)).cloned().unwrap_or_else(C::zero)
    };
    let lam_tilde = lt_poly(&[(1, 0, C::one()), (2, 0, -int(8).mul_ref(&b2))]);
    let got_lam = lt_poly(&[(1, 0, coeff(1, 2)), (2, 0, coeff(2, 2))]);
    checks.push(check("lambda_tilde", lam_tilde, got_lam, lambda));
    let beta_tilde = lt_poly(&[
        (0, 0, l2.mul_ref(beta)),
        (1, 0, int(2).mul_ref(&b0).mul_ref(&l2)),
        (2, 0, -int(4).mul_ref(&l2).mul_ref(&b2).mul_ref(&b0) - int(4).mul_ref(&l2).mul_ref(&b3)),
    ]);
    let got_beta = lt_poly(&[(0, 0, l2.mul_ref(beta)), (1, 0, coeff(1, 1)), (2, 0, coeff(2, 1))]);
    checks.push(check("beta_tilde", beta_tilde, got_beta, lambda));
    let higher = scaled.iter().enumerate().any(|(deg, row)| {
        row.iter().enumerate().any(|(p, c)| !c.is_zero() && (deg > 2 || p == 0 || p > 2))
    });
    checks.push(DiagramCheck {
        id: "no_other_terms".into(),
        expected: vec![],
        computed: if higher { at_lambda(&scaled, lambda) } else { vec![] },
        matches: !higher,
    });

    Ok(DiagramReport {
        beta: pair(beta),
        lambda: pair(lambda),
        l,
        checks,
    })
}

/// `|F|_h = Σ_{α,β} h^{|α|+|β|} |c_{α,β}|` over the Taylor coefficients at `φ = 0`.
pub fn norm_small_field<C: Scalar>(f: &Form<C>, h: f64) -> Result<f64> {
    if h < 0.0 {
        return Err(Error::Input("h must be nonnegative".into()));
    }
    if f.nparams() != 0 {
        return Err(Error::Input("substitute all parameters before taking the norm".into()));
    }
    Ok(f.terms()
        .map(|(m, e, c)| h.powi(f.field_degree(m, e) as i32) * c.to_c64().norm())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{cq_real, Cq};

    #[test]
    fn normal_coordinates_round_trip() {
        let k = [cq_real(1, 2), cq_real(-3, 1), cq_real(2, 7), cq_real(5, 1), cq_real(-1, 3)];
        assert_eq!(normal_coordinates(&normal_form(&k)).unwrap(), k);
    }

    #[test]
    fn scaling_sums_of_tau() {
        let n = 16;
        let mut s1 = Form::<Cq>::zero(n, 0);
        let mut s2 = Form::<Cq>::zero(n, 0);
        for x in 0..n {
            let t = Form::tau(n, 0, x);
            s1 = s1.plus(&t).unwrap();
            s2 = s2.plus(&t.wedge(&t).unwrap()).unwrap();
        }
        let t = Form::<Cq>::tau(1, 0, 0);
        assert_eq!(scale_block(&s1, 2), t.scale(&cq_real(4, 1)));
        assert_eq!(scale_block(&s2, 2), t.wedge(&t).unwrap());
    }

    #[test]
    fn norm_of_tau() {
        let t = Form::<Cq>::tau(1, 0, 0);
        assert!((norm_small_field(&t, 0.7).unwrap() - 2.0 * 0.49).abs() < 1e-15);
        let c = Form::<Cq>::constant(1, 0, cq_real(-3, 1));
        assert_eq!(norm_small_field(&c, 5.0).unwrap(), 3.0);
    }

    #[test]
    fn laplacian_of_bilinear_is_covariance() {
        let g = GammaCov::<Cq>::new(&cq_real(1, 3), 2).unwrap();
        let f = Form::<Cq>::phi(16, 0, 2).wedge(&Form::phibar(16, 0, 5)).unwrap();
        let lf = laplacian_gamma(&f, &g);
        assert_eq!(lf, Form::constant(16, 0, g.between(2, 5)));
    }

    #[test]
    fn rejects_large_blocks() {
        let g = GammaCov::<Cq>::new(&cq_real(1, 3), 3).unwrap();
        assert!(second_order_step(&Interaction::quartic(cq_real(1, 10)), &g).is_err());
    }
}

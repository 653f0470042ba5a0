//! Named identity suites with machine-readable pass/fail reports.
//!
//! Each check records a measured defect and the tolerance it is held to.
//! Exact checks count mismatches and use tolerance zero.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::freegreen::{scale_decomposition_residual, u_finite, u_infinite, u_spectral, GammaCov, U_INFINITE_TOL};
use crate::grassmann::gaussian::{from_rows, hermitian_part_min_eigenvalue, to_rows};
use crate::grassmann::smooth::{integrate_sites, Cosine, ExpPoly};
use crate::grassmann::{
    action, gaussian_convolve, gaussian_expectation, gaussian_partial_integrate, integrate, interior_x, lie_x,
    susy_q, tau_isomorphism_check, exterior_d, Form, GaussianForm, QuadOptions, ScalarFunction, SmoothForm,
    TauObservable,
};
use crate::hierlattice::{ball, hier_norm};
use crate::perturbation::{lemma_q_residual, norm_small_field, verify_appendix_c, Interaction};
use crate::scalar::{cq, q, Cq, Cs, Scalar, C64};
use crate::walkmc::single_site_closed_form;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Susy,
    Tau,
    Decomp,
    Diagrams,
    Norms,
    Convolution,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Susy, Suite::Tau, Suite::Decomp, Suite::Diagrams, Suite::Norms, Suite::Convolution];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "susy" => Ok(Suite::Susy),
            "tau" => Ok(Suite::Tau),
            "decomp" => Ok(Suite::Decomp),
            "diagrams" => Ok(Suite::Diagrams),
            "norms" => Ok(Suite::Norms),
            "convolution" => Ok(Suite::Convolution),
            other => Err(Error::Input(format!("unknown suite {other:?}"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Susy => "susy",
            Suite::Tau => "tau",
            Suite::Decomp => "decomp",
            Suite::Diagrams => "diagrams",
            Suite::Norms => "norms",
            Suite::Convolution => "convolution",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn tolerance(name: &str, cases: usize, defect: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            cases,
            defect,
            tolerance,
            pass: defect <= tolerance,
        }
    }

    fn exact(name: &str, cases: usize, failures: usize) -> Self {
        Check::tolerance(name, cases, failures as f64, 0.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub l: u32,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plain data");
        v["pass"] = serde_json::Value::Bool(self.all_pass());
        v
    }
}

pub fn run_suite(suite: Suite, l: u32) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Susy => susy_checks()?,
        Suite::Tau => tau_checks()?,
        Suite::Decomp => decomp_checks(l)?,
        Suite::Diagrams => diagram_checks(l)?,
        Suite::Norms => norm_checks()?,
        Suite::Convolution => convolution_checks()?,
    };
    Ok(SuiteReport {
        suite: suite.to_string(),
        l,
        checks,
    })
}

fn rand_cq(rng: &mut ChaCha8Rng) -> Cq {
    cq(q(rng.random_range(-9..=9), rng.random_range(1..=7)), q(rng.random_range(-9..=9), rng.random_range(1..=7)))
}

fn random_form<C: Scalar>(rng: &mut ChaCha8Rng, nsites: usize, max_deg: u32, even: bool) -> Form<C> {
    let mut f = Form::zero(nsites, 0);
    for _ in 0..rng.random_range(1..=8) {
        let mut mask: u128 = rng.random_range(0..(1u128 << (2 * nsites)));
        if even && mask.count_ones() % 2 == 1 {
            mask &= mask - 1;
        }
        let mut budget = max_deg.saturating_sub(mask.count_ones());
        let mut e = f.zero_exps();
        for v in e.iter_mut() {
            let k = rng.random_range(0..=budget.min(3));
            *v = k as u16;
            budget -= k;
        }
        f.add_term(mask, e, C::from_cq(&rand_cq(rng)));
    }
    f
}

fn random_positive_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<C64>> {
    loop {
        let a: Vec<Vec<C64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let base = if i == j { 1.0 } else { 0.0 };
                        C64::new(base + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
                    })
                    .collect()
            })
            .collect();
        if hermitian_part_min_eigenvalue(&from_rows(&a)) > 0.5 {
            return a;
        }
    }
}

fn worst(acc: &mut f64, v: f64) {
    if v.is_nan() || v > *acc {
        *acc = if v.is_nan() { f64::INFINITY } else { v };
    }
}

fn susy_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = QuadOptions::default();
    let mut out = Vec::new();

    let mut bad = 0;
    for i in 0..200 {
        let f: Form<Cs> = random_form(&mut rng, 1 + i % 2, 6, false);
        let ok = exterior_d(&exterior_d(&f)).is_zero()
            && interior_x(&interior_x(&f)).is_zero()
            && susy_q(&susy_q(&f)) == lie_x(&f);
        bad += usize::from(!ok);
    }
    out.push(Check::exact("Q^2 = L_X, d^2 = 0, i_X^2 = 0 on random forms", 200, bad));

    let mut bad = 0;
    for i in 0..20 {
        let n = 1 + i % 2;
        let a: Vec<Vec<Cq>> = (0..n).map(|_| (0..n).map(|_| rand_cq(&mut rng)).collect()).collect();
        bad += usize::from(!susy_q(&action(&a, 0).map(Cs::from_cq)).is_zero());
    }
    out.push(Check::exact("Q(S_A) = 0", 20, bad));

    let mut defect = 0.0;
    let mut cases = 0;
    for n in [1usize, 2] {
        for _ in 0..3 {
            let a = random_positive_matrix(&mut rng, n);
            let v = integrate(&SmoothForm::exp_neg_action(&a), &opts)?.value;
            worst(&mut defect, (v - C64::new(1.0, 0.0)).norm());
            cases += 1;
        }
    }
    out.push(Check::tolerance("integral of exp(-S_A) is 1", cases, defect, 1e-8));

    let mut defect = 0.0;
    let mut cases = 0;
    for n in [1usize, 2] {
        let mut a = random_positive_matrix(&mut rng, n);
        if n == 2 {
            a[1][0] = a[0][1];
        }
        let inv = from_rows(&a).try_inverse().ok_or_else(|| Error::Numerical("singular test matrix".into()))?;
        let cov = to_rows(&inv.transpose());
        let g = SmoothForm::exp_neg_action(&a);
        for x in 0..n {
            for y in 0..n {
                let pp = Form::<C64>::phi(n, 0, x).wedge(&Form::phibar(n, 0, y))?;
                let quad = integrate(&g.wedge_poly(&pp)?, &opts)?.value;
                let wick = gaussian_expectation(&pp, &|u, v| cov[u][v]).scalar_value();
                worst(&mut defect, (quad - inv[(x, y)]).norm());
                worst(&mut defect, (wick - inv[(x, y)]).norm());
                cases += 1;
            }
        }
    }
    out.push(Check::tolerance("two-point function is the inverse matrix", cases, defect, 1e-8));

    let funcs: Vec<Arc<dyn ScalarFunction>> = vec![
        Arc::new(Cosine(1.0)),
        Arc::new(ExpPoly::linear(C64::new(-1.0, 0.0))),
        Arc::new(ExpPoly::quartic(C64::new(0.3, 0.0))),
        Arc::new(ExpPoly::linear(C64::new(0.0, 0.7))),
    ];
    let mut defect = 0.0;
    let mut cases = 0;
    for f in funcs {
        let f0 = f.derivatives(C64::new(0.0, 0.0), 0)[0];
        for n in [1usize, 2] {
            let a = random_positive_matrix(&mut rng, n);
            let w: Vec<C64> = (0..n).map(|k| C64::new(1.0 + 0.5 * k as f64, 0.0)).collect();
            let integrand = SmoothForm::exp_neg_action(&a).wedge(&SmoothForm::f_of_tau(n, f.clone(), w))?;
            worst(&mut defect, (integrate(&integrand, &opts)?.value - f0).norm());
            cases += 1;
        }
    }
    out.push(Check::tolerance("localization: integral of exp(-S_A) F(tau) is F(0)", cases, defect, 1e-8));

    let a = random_positive_matrix(&mut rng, 2);
    let g = GaussianForm::new(from_rows(&a))?;
    let reduced = gaussian_partial_integrate(&g, &[0])?;
    let expect = SmoothForm::exp_neg_action(&to_rows(reduced.matrix()));
    let full = SmoothForm::exp_neg_action(&a);
    let mut defect = 0.0;
    let points = [C64::new(0.0, 0.0), C64::new(0.6, -0.3), C64::new(-1.1, 0.4)];
    for phi0 in points {
        let (got, _) = integrate_sites(&full, &[1], &[phi0, C64::new(0.0, 0.0)], &opts)?;
        let want = expect.eval(&[phi0]);
        for m in 0..4u128 {
            worst(&mut defect, (got.get(m) - want.get(m)).norm());
        }
    }
    out.push(Check::tolerance("Schur complement matches partial quadrature", points.len(), defect, 1e-8));
    Ok(out)
}

fn convolution_checks() -> Result<Vec<Check>> {
    let opts = QuadOptions::default();
    let mut out = Vec::new();
    let pairs = [
        (C64::new(1.4, 0.3), C64::new(0.8, -0.2)),
        (C64::new(0.9, 0.0), C64::new(2.5, 0.4)),
    ];
    let mut defect = 0.0;
    let mut cases = 0;
    for (a, b) in pairs {
        let conv = gaussian_convolve(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, b))?;
        let closed = a * b / (a + b);
        worst(&mut defect, (conv.matrix()[(0, 0)] - closed).norm());
        let joint = vec![vec![a, -a], vec![-a, a + b]];
        let full = SmoothForm::exp_neg_action(&joint);
        let expect = SmoothForm::exp_neg_action(&to_rows(conv.matrix()));
        for phi0 in [C64::new(0.0, 0.0), C64::new(0.5, 0.5), C64::new(-0.8, 0.1)] {
            let (got, _) = integrate_sites(&full, &[1], &[phi0, C64::new(0.0, 0.0)], &opts)?;
            let want = expect.eval(&[phi0]);
            for m in 0..4u128 {
                worst(&mut defect, (got.get(m) - want.get(m)).norm());
            }
            cases += 1;
        }
    }
    out.push(Check::tolerance("convolution of Gaussians by quadrature", cases, defect, 1e-8));

    let a = C64::new(1.4, 0.3);
    let sharp = gaussian_convolve(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, C64::new(1e6, 0.0)))?;
    out.push(Check::tolerance("sharp limit", 1, (sharp.matrix()[(0, 0)] - a).norm(), 1e-4));
    Ok(out)
}

fn tau_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let unit = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    let lambda = C64::new(0.3, 0.0);
    let f = TauObservable::Single(Arc::new(ExpPoly::quartic(lambda)));
    let r = tau_isomorphism_check(&unit, &f, 0, 0)?;
    let closed = single_site_closed_form(C64::new(1.0, 0.0), lambda)?;
    let mut defect = 0.0;
    worst(&mut defect, (r.lhs - closed).norm() / closed.norm());
    worst(&mut defect, (r.rhs - closed).norm() / closed.norm());
    out.push(Check::tolerance("one site, F = exp(-0.3 t^2): forms vs walk", 1, defect, 1e-6));

    let reversible = DMatrix::from_row_slice(2, 2, &[
        C64::new(1.5, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(1.5, 0.0),
    ]);
    let skewed = DMatrix::from_row_slice(2, 2, &[
        C64::new(1.5, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(-0.2, 0.0),
        C64::new(0.7, 0.0),
    ]);
    let mut defect = 0.0;
    let mut cases = 0;
    for k in [vec![0.3, -0.5], vec![1.1, 0.2]] {
        let obs = TauObservable::Fourier(k.clone());
        for a in [&reversible, &skewed] {
            for (x, y) in [(0, 1), (1, 0), (1, 1)] {
                let r = tau_isomorphism_check(a, &obs, x, y)?;
                let kmat = DMatrix::from_fn(2, 2, |i, j| if i == j { C64::new(0.0, k[i]) } else { C64::new(0.0, 0.0) });
                let inv = (a - kmat)
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("A - iK is singular".into()))?;
                worst(&mut defect, r.diff);
                worst(&mut defect, (r.lhs - inv[(y, x)]).norm());
                cases += 1;
            }
        }
    }
    out.push(Check::tolerance("two sites, Fourier observable vs transposed (A - iK)^-1", cases, defect, 1e-8));
    Ok(out)
}

fn random_sector_beta(rng: &mut ChaCha8Rng) -> C64 {
    let r = rng.random_range(0.05..2.0);
    let t = rng.random_range(-0.6..0.6) * std::f64::consts::PI;
    C64::from_polar(r, t)
}

fn decomp_checks(l: u32) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut out = Vec::new();
    let betas: Vec<C64> = (0..20).map(|_| random_sector_beta(&mut rng)).collect();
    let mut defect = 0.0;
    let mut cases = 0;
    for beta in &betas {
        for n in 1..=4u32 {
            for x in ball(l, n.min(3)) {
                worst(&mut defect, scale_decomposition_residual(beta, &x, n, l)?.norm());
                cases += 1;
            }
        }
    }
    out.push(Check::tolerance("scale decomposition residual", cases, defect, 1e-12));

    let mut defect = 0.0;
    let mut cases = 0;
    for beta in &betas {
        for n in 1..=4u32 {
            for x in ball(l, n.min(3)).iter().step_by(7) {
                let a = u_finite(beta, x, n, l)?;
                let b = u_spectral(beta, x, n, l)?;
                worst(&mut defect, (a - b).norm());
                cases += 1;
            }
        }
    }
    out.push(Check::tolerance("spectral sum vs scale sum", cases, defect, 1e-12));

    let mut defect = 0.0;
    let mut cases = 0;
    for x in ball(l, 3).iter().filter(|x| !x.is_zero()) {
        let v = u_infinite(C64::new(0.0, 0.0), x, U_INFINITE_TOL)?;
        let want = hier_norm(x).powi(-2);
        worst(&mut defect, (v - C64::new(want, 0.0)).norm());
        cases += 1;
    }
    out.push(Check::tolerance("massless infinite-volume potential is |x|^-2", cases, defect, 1e-10));
    Ok(out)
}

fn diagram_checks(l: u32) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    let mut tally: Vec<(String, usize)> = Vec::new();
    for _ in 0..10 {
        let beta = cq(q(rng.random_range(1..=40), rng.random_range(1..=10)), q(rng.random_range(-20..=20), rng.random_range(1..=10)));
        let lambda = cq(q(rng.random_range(1..=9), 100), q(rng.random_range(-9..=9), 100));
        let report = verify_appendix_c(&beta, &lambda, l)?;
        for c in &report.checks {
            match tally.iter_mut().find(|(id, _)| *id == c.id) {
                Some(entry) => entry.1 += usize::from(!c.matches),
                None => tally.push((c.id.clone(), usize::from(!c.matches))),
            }
        }
    }
    for (id, bad) in &tally {
        out.push(Check::exact(&format!("diagram {id}"), 10, *bad));
    }

    let beta = cq(q(3, 7), q(-1, 5));
    let gamma = GammaCov::<Cq>::new(&beta, l)?;
    let block = (l as usize).pow(4);
    let v = Interaction::quartic(cq(q(1, 3), q(1, 9))).block_form(block)?;
    let residual = lemma_q_residual(&v, &|a, b| gamma.between(a, b))?;
    out.push(Check::exact("Duhamel operator identity on the quartic block", 1, usize::from(!residual.is_zero())));
    Ok(out)
}

fn norm_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sub = 0;
    let mut deriv = 0;
    for _ in 0..100 {
        let f: Form<Cq> = random_form(&mut rng, 1, 5, true);
        let g: Form<Cq> = random_form(&mut rng, 1, 5, true);
        let h = rng.random_range(0.1..2.0);
        let prod = f.embed(2, 0).wedge(&g.embed(2, 1))?;
        let lhs = norm_small_field(&prod, h)?;
        let rhs = norm_small_field(&f, h)? * norm_small_field(&g, h)?;
        sub += usize::from(lhs > rhs * (1.0 + 1e-12));

        let hp = h + rng.random_range(0.05..1.0);
        let nb: u32 = rng.random_range(0..=2);
        let na: u32 = rng.random_range(0..=1);
        let mut d = f.clone();
        for _ in 0..nb {
            d = d.d_var(rng.random_range(0..2));
        }
        for _ in 0..na {
            d = d.d_gen(rng.random_range(0..2));
        }
        let k = na + nb;
        let fact: f64 = (1..=k).map(f64::from).product();
        let bound = fact * (hp - h).powi(-(k as i32)) * norm_small_field(&f, hp)?;
        deriv += usize::from(norm_small_field(&d, h)? > bound * (1.0 + 1e-12));
    }
    Ok(vec![
        Check::exact("product property", 100, sub),
        Check::exact("derivative bound", 100, deriv),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}

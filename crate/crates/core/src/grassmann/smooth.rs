//! Smooth forms on small site sets and their integration by quadrature.
//!
//! A [`SmoothForm`] is evaluated pointwise into a dense Grassmann element
//! [`GrassElem`]. Integration keeps the coefficient of the top monomial of
//! the integrated sites, uses `ψ_xψ̄_x = −π^{-1} du_x dv_x`, and integrates
//! each site in polar coordinates: Gauss–Legendre on `[0, R]` in the radius,
//! the periodic trapezoid rule in the angle. When the Gaussian decay of the
//! integrand is known, the integrated variables are first whitened so that
//! the decay is `e^{−|χ|²}` in every direction.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;
use crate::scalar::C64;

use super::form::{psi_bit, psibar_bit, wedge_sign, Form, Mask};

/// Largest site set supported by dense Grassmann elements.
pub const MAX_DENSE_SITES: usize = 2;
const DENSE: usize = 1 << (2 * MAX_DENSE_SITES);
const ZERO: C64 = C64::new(0.0, 0.0);

fn sign_table() -> &'static [[i8; DENSE]; DENSE] {
    static TABLE: OnceLock<[[i8; DENSE]; DENSE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0i8; DENSE]; DENSE];
        for (a, row) in t.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = match wedge_sign(a as Mask, b as Mask) {
                    None => 0,
                    Some(true) => -1,
                    Some(false) => 1,
                };
            }
        }
        t
    })
}

/// Element of the Grassmann algebra on at most two sites with numeric coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrassElem {
    n: usize,
    c: [C64; DENSE],
}

impl GrassElem {
    pub fn zero(n: usize) -> Self {
        assert!(n <= MAX_DENSE_SITES, "dense Grassmann elements support at most {MAX_DENSE_SITES} sites");
        GrassElem { n, c: [ZERO; DENSE] }
    }

    pub fn scalar(n: usize, v: C64) -> Self {
        let mut e = Self::zero(n);
        e.c[0] = v;
        e
    }

    fn from_slice(n: usize, v: &[C64]) -> Self {
        let mut e = Self::zero(n);
        e.c[..v.len()].copy_from_slice(v);
        e
    }

    fn size(&self) -> usize {
        1 << (2 * self.n)
    }

    pub fn nsites(&self) -> usize {
        self.n
    }

    pub fn get(&self, m: Mask) -> C64 {
        self.c[m as usize]
    }

    pub fn set(&mut self, m: Mask, v: C64) {
        self.c[m as usize] = v;
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c[..self.size()]
    }

    pub fn top(&self) -> C64 {
        self.c[self.size() - 1]
    }

    pub fn scale(&self, v: C64) -> Self {
        let mut out = *self;
        for z in out.c.iter_mut() {
            *z *= v;
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = *self;
        for (z, w) in out.c.iter_mut().zip(&o.c) {
            *z += w;
        }
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        let size = self.size();
        let table = sign_table();
        let mut out = Self::zero(self.n);
        for a in 0..size {
            let ca = self.c[a];
            if ca.re == 0.0 && ca.im == 0.0 {
                continue;
            }
            for b in 0..size {
                let cb = o.c[b];
                if cb.re == 0.0 && cb.im == 0.0 {
                    continue;
                }
                match table[a][b] {
                    0 => {}
                    1 => out.c[a | b] += ca * cb,
                    _ => out.c[a | b] -= ca * cb,
                }
            }
        }
        out
    }

    /// `exp` of an element, through the terminating series of its nilpotent part.
    pub fn exp(&self) -> Self {
        let base = self.c[0].exp();
        let mut nil = *self;
        nil.c[0] = ZERO;
        let mut total = Self::scalar(self.n, C64::new(1.0, 0.0));
        let mut pw = total;
        for k in 1..=2 * self.n {
            pw = pw.mul(&nil).scale(C64::new(1.0 / k as f64, 0.0));
            total = total.add(&pw);
        }
        total.scale(base)
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.coeffs()
            .iter()
            .zip(o.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Scalar function supplying its derivatives, used for `F(τ)` with smooth `F`.
pub trait ScalarFunction: Send + Sync {
    /// `[f(t), f'(t), …, f^{(order)}(t)]`.
    fn derivatives(&self, t: C64, order: usize) -> Vec<C64>;
}

fn poly_eval(p: &[C64], t: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * t + c)
}

fn poly_deriv(p: &[C64]) -> Vec<C64> {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * k as f64)
        .collect()
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Polynomial `Σ c_k t^k`.
#[derive(Clone, Debug)]
pub struct Polynomial(pub Vec<C64>);

impl ScalarFunction for Polynomial {
    fn derivatives(&self, t: C64, order: usize) -> Vec<C64> {
        let mut p = self.0.clone();
        let mut out = Vec::with_capacity(order + 1);
        for _ in 0..=order {
            out.push(poly_eval(&p, t));
            p = poly_deriv(&p);
        }
        out
    }
}

/// `exp(p(t))` for a polynomial `p`.
///
/// Derivatives are `q_k(t) e^{p(t)}` with `q_0 = 1`, `q_{k+1} = q_k' + p' q_k`;
/// the `q_k` are precomputed up to the order needed for two sites.
#[derive(Clone, Debug)]
pub struct ExpPoly {
    p: Vec<C64>,
    q: Vec<Vec<C64>>,
}

const EXP_POLY_CACHED_ORDER: usize = 2 * MAX_DENSE_SITES;

impl ExpPoly {
    pub fn new(p: Vec<C64>) -> Self {
        let dp = poly_deriv(&p);
        let mut q = vec![vec![C64::new(1.0, 0.0)]];
        for k in 0..EXP_POLY_CACHED_ORDER {
            let next = poly_add(&poly_deriv(&q[k]), &poly_mul(&dp, &q[k]));
            q.push(next);
        }
        ExpPoly { p, q }
    }
    /// `e^{−λt²}`.
    pub fn quartic(lambda: C64) -> Self {
        Self::new(vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), -lambda])
    }
    /// `e^{ct}`.
    pub fn linear(c: C64) -> Self {
        Self::new(vec![C64::new(0.0, 0.0), c])
    }
}

impl ScalarFunction for ExpPoly {
    fn derivatives(&self, t: C64, order: usize) -> Vec<C64> {
        let g = poly_eval(&self.p, t).exp();
        if order <= EXP_POLY_CACHED_ORDER {
            return self.q[..=order].iter().map(|q| poly_eval(q, t) * g).collect();
        }
        let dp = poly_deriv(&self.p);
        let mut q = vec![C64::new(1.0, 0.0)];
        let mut out = Vec::with_capacity(order + 1);
        for _ in 0..=order {
            out.push(poly_eval(&q, t) * g);
            q = poly_add(&poly_deriv(&q), &poly_mul(&dp, &q));
        }
        out
    }
}

/// `cos(kt)`.
#[derive(Clone, Debug)]
pub struct Cosine(pub f64);

impl ScalarFunction for Cosine {
    fn derivatives(&self, t: C64, order: usize) -> Vec<C64> {
        let k = self.0;
        let (c, s) = ((k * t).cos(), (k * t).sin());
        let cycle = [c, -s, -c, s];
        (0..=order).map(|j| cycle[j % 4] * k.powi(j as i32)).collect()
    }
}

/// Any function given through a derivative closure.
#[derive(Clone)]
pub struct FnDerivs(pub Arc<dyn Fn(C64, usize) -> Vec<C64> + Send + Sync>);

impl ScalarFunction for FnDerivs {
    fn derivatives(&self, t: C64, order: usize) -> Vec<C64> {
        (self.0)(t, order)
    }
}

type Eval = Arc<dyn Fn(&[C64]) -> GrassElem + Send + Sync>;

/// Form whose coefficients are functions of the field values `φ_x ∈ ℂ`.
#[derive(Clone)]
pub struct SmoothForm {
    n: usize,
    eval: Eval,
    decay: Option<DMatrix<C64>>,
}

impl SmoothForm {
    pub fn from_fn(n: usize, f: impl Fn(&[C64]) -> GrassElem + Send + Sync + 'static) -> Self {
        assert!(n <= MAX_DENSE_SITES, "smooth forms support at most {MAX_DENSE_SITES} sites");
        SmoothForm {
            n,
            eval: Arc::new(f),
            decay: None,
        }
    }

    /// Polynomial form evaluated pointwise (parameters must already be substituted).
    pub fn from_poly(f: &Form<C64>) -> Self {
        let n = f.nsites();
        let compiled: Vec<(usize, C64, Vec<(usize, bool, i32)>)> = f
            .terms()
            .map(|(m, e, c)| {
                let powers = (0..2 * n)
                    .filter(|&v| e[v] > 0)
                    .map(|v| (v / 2, v % 2 == 1, i32::from(e[v])))
                    .collect();
                (m as usize, *c, powers)
            })
            .collect();
        Self::from_fn(n, move |phi| {
            let mut out = GrassElem::zero(n);
            for (m, c, powers) in &compiled {
                let mut v = *c;
                for &(x, bar, k) in powers {
                    let z = if bar { phi[x].conj() } else { phi[x] };
                    v *= z.powi(k);
                }
                out.c[*m] += v;
            }
            out
        })
    }

    pub fn constant(n: usize, v: C64) -> Self {
        Self::from_fn(n, move |_| GrassElem::scalar(n, v))
    }

    /// `e^{F}` for an even polynomial form `F`.
    pub fn exp_of_poly(f: &Form<C64>) -> Self {
        let inner = Self::from_poly(f);
        Self::from_fn(inner.n, move |phi| inner.eval(phi).exp())
    }

    /// `e^{−S_A}`, with the constant fermionic factor precomputed.
    pub fn exp_neg_action(a: &[Vec<C64>]) -> Self {
        let n = a.len();
        let s = super::form::action(a, 0);
        let fermion = Self::from_poly(&s.grassmann_part(2).negate())
            .eval(&vec![C64::new(0.0, 0.0); n])
            .exp();
        let h = super::gaussian::from_rows(a);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let a = a.to_vec();
        let mut out = Self::from_fn(n, move |phi| {
            let mut b = C64::new(0.0, 0.0);
            for x in 0..n {
                for y in 0..n {
                    b += phi[x] * a[x][y] * phi[y].conj();
                }
            }
            fermion.scale((-b).exp())
        });
        out.decay = Some(h);
        out
    }

    /// Hermitian matrix `H` with `|F(φ)| ≲ e^{−Re Σ φ_x H_{xy} φ̄_y}`, when known.
    pub fn decay(&self) -> Option<&DMatrix<C64>> {
        self.decay.as_ref()
    }

    /// `f(Σ_x w_x τ_x)` by the terminating Taylor series in the `ψψ̄` pairs.
    pub fn f_of_tau(n: usize, f: Arc<dyn ScalarFunction>, weights: Vec<C64>) -> Self {
        assert_eq!(weights.len(), n);
        Self::from_fn(n, move |phi| {
            let t: C64 = (0..n).map(|x| weights[x] * phi[x].norm_sqr()).sum();
            let d = f.derivatives(t, n);
            let mut out = GrassElem::zero(n);
            for subset in 0..(1usize << n) {
                let mut mask: Mask = 0;
                let mut w = C64::new(1.0, 0.0);
                for x in 0..n {
                    if subset >> x & 1 == 1 {
                        mask |= (1u128 << psi_bit(x)) | (1u128 << psibar_bit(x));
                        w *= weights[x];
                    }
                }
                out.set(mask, d[subset.count_ones() as usize] * w);
            }
            out
        })
    }

    /// `f(τ_x)` for one site `x` of an `n`-site form.
    pub fn f_of_tau_site(n: usize, f: Arc<dyn ScalarFunction>, x: usize) -> Self {
        let mut w = vec![C64::new(0.0, 0.0); n];
        w[x] = C64::new(1.0, 0.0);
        Self::f_of_tau(n, f, w)
    }

    pub fn nsites(&self) -> usize {
        self.n
    }

    pub fn eval(&self, phi: &[C64]) -> GrassElem {
        (self.eval)(phi)
    }

    pub fn wedge(&self, o: &SmoothForm) -> Result<Self> {
        if self.n != o.n {
            return Err(Error::Input("mismatched site sets".into()));
        }
        let (a, b) = (self.clone(), o.clone());
        let decay = match (&self.decay, &o.decay) {
            (Some(h), Some(k)) => Some(h + k),
            (Some(h), None) | (None, Some(h)) => Some(h.clone()),
            (None, None) => None,
        };
        let mut out = Self::from_fn(self.n, move |phi| a.eval(phi).mul(&b.eval(phi)));
        out.decay = decay;
        Ok(out)
    }

    pub fn plus(&self, o: &SmoothForm) -> Result<Self> {
        if self.n != o.n {
            return Err(Error::Input("mismatched site sets".into()));
        }
        let (a, b) = (self.clone(), o.clone());
        let decay = if self.decay == o.decay { self.decay.clone() } else { None };
        let mut out = Self::from_fn(self.n, move |phi| a.eval(phi).add(&b.eval(phi)));
        out.decay = decay;
        Ok(out)
    }

    pub fn wedge_poly(&self, f: &Form<C64>) -> Result<Self> {
        self.wedge(&Self::from_poly(f))
    }
}

/// Quadrature controls.
#[derive(Clone, Debug)]
pub struct QuadOptions {
    /// Successive refinements must agree to `tol · max(1, |I|)`.
    pub tol: f64,
    /// Radial cutoff; found by scanning the integrand when `None`.
    pub radius: Option<f64>,
    /// Refinement ladder of (radial, angular) node counts per site; a
    /// default ladder is used when `None`.
    pub levels: Option<Vec<(usize, usize)>>,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            tol: 1e-9,
            radius: None,
            levels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub nodes: usize,
}

fn pair_mask(x: usize) -> Mask {
    (1u128 << psi_bit(x)) | (1u128 << psibar_bit(x))
}

struct Projector {
    pairs: Mask,
    size: usize,
}

impl Projector {
    fn project_into(&self, e: &GrassElem, w: C64, out: &mut [C64]) {
        for m in 0..self.size {
            if (m as Mask) & self.pairs == self.pairs {
                let z = e.c[m];
                if z.re != 0.0 || z.im != 0.0 {
                    out[m & !(self.pairs as usize)] += w * z;
                }
            }
        }
    }

    fn magnitude(&self, e: &GrassElem) -> f64 {
        (0..self.size)
            .filter(|&m| (m as Mask) & self.pairs == self.pairs)
            .map(|m| e.c[m].norm())
            .sum()
    }
}

/// Linear change of variables `φ_sites = P χ` with Jacobian `|det P|²`.
struct Whitening {
    p: DMatrix<C64>,
    jacobian: f64,
}

impl Whitening {
    fn identity(k: usize) -> Self {
        Whitening {
            p: DMatrix::identity(k, k),
            jacobian: 1.0,
        }
    }

    /// Map under which `Re Σ φ_x H_{xy} φ̄_y = |χ|²` on the integrated sites.
    fn from_decay(h: &DMatrix<C64>, sites: &[usize]) -> Option<Self> {
        let k = sites.len();
        let hs = DMatrix::from_fn(k, k, |i, j| h[(sites[i], sites[j])]);
        let chol = nalgebra::Cholesky::new(hs)?;
        let r_inv = chol.l().adjoint().try_inverse()?;
        let p = r_inv.map(|z| z.conj());
        let jacobian = p.determinant().norm_sqr();
        Some(Whitening { p, jacobian })
    }

    fn place(&self, sites: &[usize], chi: &[C64], phi: &mut [C64]) {
        for (i, &s) in sites.iter().enumerate() {
            let mut z = C64::new(0.0, 0.0);
            for (j, c) in chi.iter().enumerate() {
                z += self.p[(i, j)] * c;
            }
            phi[s] = z;
        }
    }
}

struct Setup<'a> {
    f: &'a SmoothForm,
    sites: &'a [usize],
    base: &'a [C64],
    proj: Projector,
    map: Whitening,
}

impl Setup<'_> {
    fn eval_at(&self, chi: &[C64], phi: &mut [C64]) -> GrassElem {
        self.map.place(self.sites, chi, phi);
        self.f.eval(phi)
    }
}

fn find_radius(setup: &Setup) -> Result<f64> {
    let dirs = 8;
    let k = setup.sites.len();
    let probe = |r: f64| -> f64 {
        let mut best: f64 = 0.0;
        let mut phi = setup.base.to_vec();
        for d in 0..dirs {
            let ang = 2.0 * PI * d as f64 / dirs as f64;
            for single in std::iter::once(None).chain((0..k).map(Some)) {
                let chi: Vec<C64> = (0..k)
                    .map(|j| {
                        if single.is_none_or(|t| t == j) {
                            C64::from_polar(r, ang * (j as f64 + 1.0))
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                best = best.max(setup.proj.magnitude(&setup.eval_at(&chi, &mut phi)));
            }
        }
        best
    };
    let step = 0.25;
    let mut peak: f64 = 0.0;
    let mut values = Vec::new();
    let mut r = 0.0;
    while r <= 60.0 {
        let v = probe(r) * (1.0 + r).powi(2);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("integrand not finite at radius {r}")));
        }
        peak = peak.max(v);
        values.push((r, v));
        r += step;
    }
    let cut = 1e-13 * peak.max(1e-300);
    let last_big = values.iter().rev().find(|(_, v)| *v > cut).map(|(r, _)| *r).unwrap_or(0.0);
    if last_big >= 60.0 - step {
        return Err(Error::Numerical(
            "integrand does not decay fast enough for quadrature".into(),
        ));
    }
    Ok((last_big + step).max(1.0))
}

fn site_nodes(mr: usize, mt: usize, radius: f64) -> Vec<(C64, f64)> {
    let (rx, rw) = gauss_legendre_on(mr, 0.0, radius);
    let mut out = Vec::with_capacity(mr * mt);
    let wt = 2.0 * PI / mt as f64;
    for (r, w) in rx.iter().zip(&rw) {
        for j in 0..mt {
            let th = wt * j as f64;
            out.push((C64::from_polar(*r, th), w * r * wt));
        }
    }
    out
}

fn kahan_sum(parts: &[Vec<C64>], size: usize) -> Vec<C64> {
    let mut sum = vec![C64::new(0.0, 0.0); size];
    let mut comp = vec![C64::new(0.0, 0.0); size];
    for p in parts {
        for k in 0..size {
            let y = p[k] - comp[k];
            let t = sum[k] + y;
            comp[k] = (t - sum[k]) - y;
            sum[k] = t;
        }
    }
    sum
}

fn integrate_grid(setup: &Setup, nodes: &[(C64, f64)]) -> Vec<C64> {
    let k = setup.sites.len();
    let p = nodes.len();
    let inner_count = p.pow(k as u32 - 1);
    let size = setup.proj.size;
    let parts: Vec<Vec<C64>> = (0..p)
        .into_par_iter()
        .map(|first| {
            let mut acc = vec![C64::new(0.0, 0.0); size];
            let mut phi = setup.base.to_vec();
            let mut chi = vec![nodes[first].0; k];
            for idx in 0..inner_count {
                let mut w = nodes[first].1 * setup.map.jacobian;
                let mut rest = idx;
                for c in chi.iter_mut().skip(1) {
                    let (z, wz) = nodes[rest % p];
                    rest /= p;
                    *c = z;
                    w *= wz;
                }
                let e = setup.eval_at(&chi, &mut phi);
                setup.proj.project_into(&e, C64::new(w, 0.0), &mut acc);
            }
            acc
        })
        .collect();
    kahan_sum(&parts, size)
}

/// Integrates out the sites in `sites` at fixed values `base` of the others.
///
/// Returns the resulting Grassmann element on the remaining generators
/// (indexed in the original numbering) with the refinement error estimate.
/// Forms carrying a Gaussian decay matrix are integrated in whitened
/// coordinates.
pub fn integrate_sites(
    f: &SmoothForm,
    sites: &[usize],
    base: &[C64],
    opts: &QuadOptions,
) -> Result<(GrassElem, QuadResult)> {
    let n = f.nsites();
    if sites.is_empty() {
        let e = f.eval(base);
        let value = e.get(0);
        return Ok((e, QuadResult { value, error: 0.0, nodes: 1 }));
    }
    if sites.len() > 2 || sites.iter().any(|&s| s >= n) || base.len() != n {
        return Err(Error::Input(
            "quadrature integrates one or two sites of the form".into(),
        ));
    }
    let pairs = sites.iter().fold(0, |m, &s| m | pair_mask(s));
    let map = f
        .decay
        .as_ref()
        .and_then(|h| Whitening::from_decay(h, sites))
        .unwrap_or_else(|| Whitening::identity(sites.len()));
    let setup = Setup {
        f,
        sites,
        base,
        proj: Projector {
            pairs,
            size: 1 << (2 * n),
        },
        map,
    };
    let radius = match opts.radius {
        Some(r) => r,
        None => find_radius(&setup)?,
    };
    let default_levels: &[(usize, usize)] = if sites.len() == 1 {
        &[(24, 16), (32, 24), (48, 32), (64, 48), (96, 64), (128, 96)]
    } else {
        &[(24, 16), (32, 24), (40, 28), (48, 32), (64, 40), (80, 48)]
    };
    let levels = opts.levels.as_deref().unwrap_or(default_levels);
    let norm = (-1.0 / PI).powi(sites.len() as i32);
    let mut prev: Option<Vec<C64>> = None;
    let mut last_err = f64::INFINITY;
    for &(mr, mt) in levels {
        let nodes = site_nodes(mr, mt, radius);
        let count = nodes.len().pow(sites.len() as u32);
        let cur: Vec<C64> = integrate_grid(&setup, &nodes)
            .into_iter()
            .map(|z| z * norm)
            .collect();
        if let Some(p) = &prev {
            let err = cur.iter().zip(p).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let scale = cur.iter().map(|z| z.norm()).fold(1.0, f64::max);
            last_err = err;
            if err < opts.tol * scale {
                let value = cur[0];
                let result = QuadResult { value, error: err, nodes: count };
                return Ok((GrassElem::from_slice(n, &cur), result));
            }
        }
        if levels.len() == 1 {
            let value = cur[0];
            let result = QuadResult { value, error: f64::NAN, nodes: count };
            return Ok((GrassElem::from_slice(n, &cur), result));
        }
        prev = Some(cur);
    }
    let est = prev.map(|p| p[0]).unwrap_or_default();
    Err(Error::Numerical(format!(
        "quadrature did not converge: estimate {est}, error {last_err:e}"
    )))
}

/// `∫_{ℂ^Λ} F` for `|Λ| ≤ 2`.
pub fn integrate(f: &SmoothForm, opts: &QuadOptions) -> Result<QuadResult> {
    let n = f.nsites();
    if n == 0 || n > 2 {
        return Err(Error::Input("quadrature requires one or two sites".into()));
    }
    let sites: Vec<usize> = (0..n).collect();
    let base = vec![C64::new(0.0, 0.0); n];
    Ok(integrate_sites(f, &sites, &base, opts)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn grass_exp_of_pair() {
        let mut e = GrassElem::zero(1);
        e.set(0b11, c(2.0));
        let x = e.exp();
        assert_eq!(x.coeffs().len(), 4);
        assert_eq!(x.get(0), c(1.0));
        assert_eq!(x.get(0b11), c(2.0));
    }

    #[test]
    fn f_of_tau_quartic_matches_two_term_taylor() {
        let lam = 0.3;
        let f = SmoothForm::f_of_tau_site(1, Arc::new(ExpPoly::quartic(c(lam))), 0);
        let phi = [C64::new(0.7, -0.4)];
        let u = phi[0].norm_sqr();
        let e = f.eval(&phi);
        assert!((e.get(0) - c((-lam * u * u).exp())).norm() < 1e-15);
        assert!((e.get(0b11) - c(-2.0 * lam * u * (-lam * u * u).exp())).norm() < 1e-15);
    }

    #[test]
    fn gaussian_normalization_one_site() {
        let a = vec![vec![C64::new(1.3, 0.4)]];
        let r = integrate(&SmoothForm::exp_neg_action(&a), &QuadOptions::default()).unwrap();
        assert!((r.value - c(1.0)).norm() < 1e-9, "{:?}", r);
    }

    #[test]
    fn non_decaying_integrand_is_flagged() {
        let f = SmoothForm::constant(1, c(1.0));
        let g = SmoothForm::from_fn(1, |_| {
            let mut e = GrassElem::zero(1);
            e.set(0b11, C64::new(1.0, 0.0));
            e
        });
        assert!(integrate(&f.wedge(&g).unwrap(), &QuadOptions::default()).is_err());
    }

    #[test]
    fn derivative_helpers() {
        let d = ExpPoly::linear(c(-2.0)).derivatives(c(0.5), 3);
        let v = (-1.0f64).exp();
        assert!((d[3] - c(-8.0 * v)).norm() < 1e-14);
        let p = Polynomial(vec![c(1.0), c(0.0), c(3.0)]).derivatives(c(2.0), 2);
        assert_eq!(p, vec![c(13.0), c(12.0), c(6.0)]);
        let k = Cosine(2.0).derivatives(c(0.0), 2);
        assert!((k[2] - c(-4.0)).norm() < 1e-14);
    }
}

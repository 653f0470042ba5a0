//! Polynomial differential forms on `ℂ^Λ`.
//!
//! Generators are ordered `ψ_{x₀}, ψ̄_{x₀}, ψ_{x₁}, ψ̄_{x₁}, …`; a Grassmann
//! monomial is the bitset of its generators written in that order. Boson
//! variables are ordered `φ_{x₀}, φ̄_{x₀}, φ_{x₁}, …` followed by optional
//! commuting parameters (couplings, flow time), which derivatives in the
//! fields leave untouched.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};

pub type Mask = u128;
pub type Exps = Vec<u16>;
pub type Poly<C> = BTreeMap<Exps, C>;

/// Largest site set a [`Form`] can carry (two generators per site).
pub const MAX_SITES: usize = 64;

pub const fn psi_bit(x: usize) -> usize {
    2 * x
}
pub const fn psibar_bit(x: usize) -> usize {
    2 * x + 1
}
pub const fn phi_var(x: usize) -> usize {
    2 * x
}
pub const fn phibar_var(x: usize) -> usize {
    2 * x + 1
}

fn parity(v: u32) -> bool {
    v % 2 == 1
}

/// Sign of `a ∧ b` relative to the canonical monomial `a | b`:
/// `None` if they share a generator, `Some(true)` for a minus sign.
pub fn wedge_sign(a: Mask, b: Mask) -> Option<bool> {
    if a & b != 0 {
        return None;
    }
    let mut count = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        let above = if j >= 127 { 0 } else { a >> (j + 1) };
        count += above.count_ones();
    }
    Some(parity(count))
}

/// Left derivative `∂/∂g` of a monomial: the remaining monomial and whether a sign flips.
pub fn left_derivative(m: Mask, g: usize) -> Option<(Mask, bool)> {
    let bit = 1u128 << g;
    if m & bit == 0 {
        return None;
    }
    let below = m & (bit - 1);
    Some((m & !bit, parity(below.count_ones())))
}

/// A polynomial form: Grassmann monomial ↦ polynomial in fields and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Form<C> {
    nsites: usize,
    nparams: usize,
    terms: BTreeMap<Mask, Poly<C>>,
}

impl<C: Scalar> Form<C> {
    pub fn zero(nsites: usize, nparams: usize) -> Self {
        assert!(nsites <= MAX_SITES, "at most {MAX_SITES} sites are supported");
        Form {
            nsites,
            nparams,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nsites: usize, nparams: usize, c: C) -> Self {
        let mut f = Self::zero(nsites, nparams);
        let e = f.zero_exps();
        f.add_term(0, e, c);
        f
    }

    pub fn nsites(&self) -> usize {
        self.nsites
    }

    pub fn nparams(&self) -> usize {
        self.nparams
    }

    pub fn nvars(&self) -> usize {
        2 * self.nsites + self.nparams
    }

    pub fn param_var(&self, k: usize) -> usize {
        2 * self.nsites + k
    }

    pub fn zero_exps(&self) -> Exps {
        vec![0; self.nvars()]
    }

    /// Single monomial `c · ψ^mask · Π vars^exps`.
    pub fn monomial(nsites: usize, nparams: usize, mask: Mask, exps: Exps, c: C) -> Self {
        let mut f = Self::zero(nsites, nparams);
        assert_eq!(exps.len(), f.nvars());
        f.add_term(mask, exps, c);
        f
    }

    fn var_form(nsites: usize, nparams: usize, v: usize) -> Self {
        let mut f = Self::zero(nsites, nparams);
        let mut e = f.zero_exps();
        e[v] = 1;
        f.add_term(0, e, C::one());
        f
    }

    fn gen_form(nsites: usize, nparams: usize, g: usize) -> Self {
        let mut f = Self::zero(nsites, nparams);
        let e = f.zero_exps();
        f.add_term(1u128 << g, e, C::one());
        f
    }

    pub fn phi(nsites: usize, nparams: usize, x: usize) -> Self {
        Self::var_form(nsites, nparams, phi_var(x))
    }
    pub fn phibar(nsites: usize, nparams: usize, x: usize) -> Self {
        Self::var_form(nsites, nparams, phibar_var(x))
    }
    pub fn psi(nsites: usize, nparams: usize, x: usize) -> Self {
        Self::gen_form(nsites, nparams, psi_bit(x))
    }
    pub fn psibar(nsites: usize, nparams: usize, x: usize) -> Self {
        Self::gen_form(nsites, nparams, psibar_bit(x))
    }
    pub fn param(nsites: usize, nparams: usize, k: usize) -> Self {
        Self::var_form(nsites, nparams, 2 * nsites + k)
    }

    /// `τ_x = φ_x φ̄_x + ψ_x ψ̄_x`.
    pub fn tau(nsites: usize, nparams: usize, x: usize) -> Self {
        let mut f = Self::zero(nsites, nparams);
        let mut e = f.zero_exps();
        e[phi_var(x)] = 1;
        e[phibar_var(x)] = 1;
        f.add_term(0, e, C::one());
        let e0 = f.zero_exps();
        f.add_term((1u128 << psi_bit(x)) | (1u128 << psibar_bit(x)), e0, C::one());
        f
    }

    /// Accumulates a term, pruning zero coefficients.
    pub fn add_term(&mut self, mask: Mask, exps: Exps, c: C) {
        if c.is_zero() {
            return;
        }
        let poly = self.terms.entry(mask).or_default();
        match poly.get_mut(&exps) {
            Some(v) => {
                let s = v.add_ref(&c);
                if s.is_zero() {
                    poly.remove(&exps);
                } else {
                    *v = s;
                }
            }
            None => {
                poly.insert(exps, c);
            }
        }
        if poly.is_empty() {
            self.terms.remove(&mask);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (Mask, &Exps, &C)> {
        self.terms
            .iter()
            .flat_map(|(m, p)| p.iter().map(move |(e, c)| (*m, e, c)))
    }

    pub fn polys(&self) -> &BTreeMap<Mask, Poly<C>> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.values().map(|p| p.len()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.nsites != other.nsites || self.nparams != other.nparams {
            return Err(Error::Input(format!(
                "mismatched site sets: ({}, {}) vs ({}, {})",
                self.nsites, self.nparams, other.nsites, other.nparams
            )));
        }
        Ok(())
    }

    fn empty_like(&self) -> Self {
        Self::zero(self.nsites, self.nparams)
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = self.empty_like();
        for (m, e, v) in self.terms() {
            out.add_term(m, e.clone(), v.mul_ref(c));
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (m, e, v) in other.terms() {
            out.add_term(m, e.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (m, e, v) in other.terms() {
            out.add_term(m, e.clone(), -v.clone());
        }
        Ok(out)
    }

    pub fn negate(&self) -> Self {
        self.scale(&(-C::one()))
    }

    /// Wedge product.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.empty_like();
        for (ma, pa) in &self.terms {
            for (mb, pb) in &other.terms {
                let Some(neg) = wedge_sign(*ma, *mb) else {
                    continue;
                };
                let m = ma | mb;
                for (ea, ca) in pa {
                    for (eb, cb) in pb {
                        let e: Exps = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                        let c = ca.mul_ref(cb);
                        out.add_term(m, e, if neg { -c } else { c });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.nsites, self.nparams, C::one());
        for _ in 0..k {
            acc = acc.wedge(self).expect("same shape");
        }
        acc
    }

    /// Derivative with respect to a commuting variable (field or parameter).
    pub fn d_var(&self, v: usize) -> Self {
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if e[v] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[v] -= 1;
            out.add_term(m, e2, c.mul_ref(&C::from_i64(i64::from(e[v]))));
        }
        out
    }

    /// Left derivative with respect to Grassmann generator `g`.
    pub fn d_gen(&self, g: usize) -> Self {
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if let Some((m2, neg)) = left_derivative(m, g) {
                out.add_term(m2, e.clone(), if neg { -c.clone() } else { c.clone() });
            }
        }
        out
    }

    /// Multiplication by a commuting variable.
    pub fn mul_var(&self, v: usize) -> Self {
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            let mut e2 = e.clone();
            e2[v] += 1;
            out.add_term(m, e2, c.clone());
        }
        out
    }

    pub fn map<D: Scalar>(&self, f: impl Fn(&C) -> D) -> Form<D> {
        let mut out = Form::<D>::zero(self.nsites, self.nparams);
        for (m, e, c) in self.terms() {
            out.add_term(m, e.clone(), f(c));
        }
        out
    }

    pub fn to_c64(&self) -> Form<C64> {
        self.map(|c| c.to_c64())
    }

    /// Coefficient of `param_k^deg`, as a form with that parameter removed.
    pub fn param_coefficient(&self, k: usize, deg: u16) -> Self {
        let v = self.param_var(k);
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if e[v] == deg {
                let mut e2 = e.clone();
                e2[v] = 0;
                out.add_term(m, e2, c.clone());
            }
        }
        out
    }

    /// Drops every term of degree above `max_deg` in parameter `k`.
    pub fn truncate_param(&self, k: usize, max_deg: u16) -> Self {
        let v = self.param_var(k);
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if e[v] <= max_deg {
                out.add_term(m, e.clone(), c.clone());
            }
        }
        out
    }

    /// Substitutes a value for parameter `k`.
    pub fn substitute_param(&self, k: usize, value: &C) -> Self {
        let v = self.param_var(k);
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            let mut e2 = e.clone();
            let p = e2[v];
            e2[v] = 0;
            out.add_term(m, e2, c.mul_ref(&value.pow(u32::from(p))));
        }
        out
    }

    /// Part of Grassmann degree `deg`.
    pub fn grassmann_part(&self, deg: u32) -> Self {
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if m.count_ones() == deg {
                out.add_term(m, e.clone(), c.clone());
            }
        }
        out
    }

    /// Part of total field degree `deg` (boson plus Grassmann, parameters excluded).
    pub fn field_degree_part(&self, deg: u32) -> Self {
        let mut out = self.empty_like();
        for (m, e, c) in self.terms() {
            if self.field_degree(m, e) == deg {
                out.add_term(m, e.clone(), c.clone());
            }
        }
        out
    }

    pub fn field_degree(&self, m: Mask, e: &Exps) -> u32 {
        m.count_ones() + e[..2 * self.nsites].iter().map(|&v| u32::from(v)).sum::<u32>()
    }

    pub fn max_field_degree(&self) -> u32 {
        self.terms().map(|(m, e, _)| self.field_degree(m, e)).max().unwrap_or(0)
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|m| m.count_ones() % 2 == 0)
    }

    /// Re-indexes onto a site set of size `nsites_new`, sending site `x` to `x + offset`.
    pub fn embed(&self, nsites_new: usize, offset: usize) -> Self {
        assert!(offset + self.nsites <= nsites_new);
        let mut out = Self::zero(nsites_new, self.nparams);
        for (m, e, c) in self.terms() {
            let m2 = m << (2 * offset);
            let mut e2 = out.zero_exps();
            e2[2 * offset..2 * offset + 2 * self.nsites].copy_from_slice(&e[..2 * self.nsites]);
            for k in 0..self.nparams {
                e2[2 * nsites_new + k] = e[2 * self.nsites + k];
            }
            out.add_term(m2, e2, c.clone());
        }
        out
    }

    /// Same form with `extra` additional trailing parameters.
    pub fn with_extra_params(&self, extra: usize) -> Self {
        let mut out = Self::zero(self.nsites, self.nparams + extra);
        for (m, e, c) in self.terms() {
            let mut e2 = e.clone();
            e2.extend(std::iter::repeat_n(0, extra));
            out.add_term(m, e2, c.clone());
        }
        out
    }

    /// Constant term (no fields, no Grassmann generators), as a polynomial in the parameters.
    pub fn field_constant(&self) -> Self {
        let mut out = self.empty_like();
        if let Some(p) = self.terms.get(&0) {
            for (e, c) in p {
                if e[..2 * self.nsites].iter().all(|&v| v == 0) {
                    out.add_term(0, e.clone(), c.clone());
                }
            }
        }
        out
    }

    /// Value of a parameter-free constant form.
    pub fn scalar_value(&self) -> C {
        self.terms
            .get(&0)
            .and_then(|p| p.get(&self.zero_exps()))
            .cloned()
            .unwrap_or_else(C::zero)
    }

    /// Evaluates at field values `phi` (with `φ̄ = conj φ`) and parameter values.
    pub fn eval_at(&self, phi: &[C64], params: &[C64]) -> BTreeMap<Mask, C64> {
        let mut out: BTreeMap<Mask, C64> = BTreeMap::new();
        for (m, e, c) in self.terms() {
            let mut v = c.to_c64();
            for x in 0..self.nsites {
                let a = e[phi_var(x)];
                let b = e[phibar_var(x)];
                if a > 0 {
                    v *= phi[x].powi(i32::from(a));
                }
                if b > 0 {
                    v *= phi[x].conj().powi(i32::from(b));
                }
            }
            for (k, p) in params.iter().enumerate().take(self.nparams) {
                let a = e[2 * self.nsites + k];
                if a > 0 {
                    v *= p.powi(i32::from(a));
                }
            }
            *out.entry(m).or_insert(C64::new(0.0, 0.0)) += v;
        }
        out
    }

    /// JSON dump `{mask(hex): [[exps], re, im], …}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for (m, p) in &self.terms {
            let list: Vec<serde_json::Value> = p
                .iter()
                .map(|(e, c)| {
                    let z = c.to_c64();
                    serde_json::json!([e, z.re, z.im])
                })
                .collect();
            obj.insert(format!("{m:x}"), serde_json::Value::Array(list));
        }
        serde_json::Value::Object(obj)
    }
}

/// `Σ_{x,y} Γ(x,y) (∂_{φ_x}∂_{φ̄_y} + ∂_{ψ_x}∂_{ψ̄_y}) F`.
pub fn laplacian<C: Scalar>(f: &Form<C>, cov: &dyn Fn(usize, usize) -> C) -> Form<C> {
    let n = f.nsites();
    let mut out = Form::zero(n, f.nparams());
    for (m, e, c) in f.terms() {
        for x in 0..n {
            let a = e[phi_var(x)];
            if a == 0 {
                continue;
            }
            for y in 0..n {
                let b = e[phibar_var(y)];
                if b == 0 {
                    continue;
                }
                let g = cov(x, y);
                if g.is_zero() {
                    continue;
                }
                let mut e2 = e.clone();
                e2[phi_var(x)] -= 1;
                e2[phibar_var(y)] -= 1;
                let k = C::from_i64(i64::from(a) * i64::from(b));
                out.add_term(m, e2, c.mul_ref(&k).mul_ref(&g));
            }
        }
        for y in 0..n {
            let Some((m1, s1)) = left_derivative(m, psibar_bit(y)) else {
                continue;
            };
            for x in 0..n {
                let Some((m2, s2)) = left_derivative(m1, psi_bit(x)) else {
                    continue;
                };
                let g = cov(x, y);
                if g.is_zero() {
                    continue;
                }
                let v = c.mul_ref(&g);
                out.add_term(m2, e.clone(), if s1 != s2 { -v } else { v });
            }
        }
    }
    out
}

fn inv_factorial<C: Scalar>(k: u32) -> C {
    let f: i64 = (1..=i64::from(k)).product();
    C::ratio(1, f)
}

/// Terminating heat series `e^{Δ_Γ} F = Σ_k Δ^k F / k!`.
pub fn heat<C: Scalar>(f: &Form<C>, cov: &dyn Fn(usize, usize) -> C) -> Form<C> {
    heat_with_time(f, cov, None)
}

/// `e^{tΔ_Γ} F` with `t` the given parameter (symbolic), or `t = 1` when `None`.
pub fn heat_with_time<C: Scalar>(
    f: &Form<C>,
    cov: &dyn Fn(usize, usize) -> C,
    time_param: Option<usize>,
) -> Form<C> {
    let mut total = f.clone();
    let mut cur = f.clone();
    let mut k = 0u32;
    loop {
        cur = laplacian(&cur, cov);
        if cur.is_zero() {
            break;
        }
        k += 1;
        let mut term = cur.scale(&inv_factorial::<C>(k));
        if let Some(t) = time_param {
            for _ in 0..k {
                term = term.mul_var(f.param_var(t));
            }
        }
        total = total.plus(&term).expect("same shape");
    }
    total
}

/// `X ⊗ Y` on the doubled site set: `X` on sites `0..n`, `Y` on `n..2n`.
pub fn double<C: Scalar>(x: &Form<C>, y: &Form<C>) -> Result<Form<C>> {
    if x.nsites() != y.nsites() || x.nparams() != y.nparams() {
        return Err(Error::Input("mismatched site sets".into()));
    }
    let n = x.nsites();
    x.embed(2 * n, 0).wedge(&y.embed(2 * n, n))
}

/// Identifies the two copies of a doubled form (multiplication map).
pub fn merge_doubled<C: Scalar>(f: &Form<C>) -> Form<C> {
    let n = f.nsites() / 2;
    let mut out = Form::zero(n, f.nparams());
    let low: Mask = if 2 * n >= 128 { Mask::MAX } else { (1u128 << (2 * n)) - 1 };
    for (m, e, c) in f.terms() {
        let ma = m & low;
        let mb = m >> (2 * n);
        let Some(neg) = wedge_sign(ma, mb) else {
            continue;
        };
        let mut e2 = out.zero_exps();
        for v in 0..2 * n {
            e2[v] = e[v] + e[v + 2 * n];
        }
        for k in 0..f.nparams() {
            e2[2 * n + k] = e[4 * n + k];
        }
        out.add_term(ma | mb, e2, if neg { -c.clone() } else { c.clone() });
    }
    out
}

/// `X Δ↔_Γ^j Y`: `j` cross contractions between the two factors, then multiplication.
pub fn cross_laplacian<C: Scalar>(
    x: &Form<C>,
    y: &Form<C>,
    cov: &dyn Fn(usize, usize) -> C,
    j: u32,
) -> Result<Form<C>> {
    let n = x.nsites();
    let mut d = double(x, y)?;
    let cross = |a: usize, b: usize| -> C {
        if (a < n) != (b < n) {
            cov(a % n, b % n)
        } else {
            C::zero()
        }
    };
    for _ in 0..j {
        d = laplacian(&d, &cross);
        if d.is_zero() {
            break;
        }
    }
    Ok(merge_doubled(&d))
}

/// Sends every site to a single site and multiplies each field generator by `factor`.
pub fn collapse<C: Scalar>(f: &Form<C>, factor: &C) -> Form<C> {
    let n = f.nsites();
    let mut out = Form::zero(1, f.nparams());
    for (m, e, c) in f.terms() {
        let mut target: Mask = 0;
        let mut neg = false;
        let mut ok = true;
        let mut rest = m;
        while rest != 0 {
            let g = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let t: Mask = 1u128 << (g % 2);
            match wedge_sign(target, t) {
                Some(s) => {
                    neg ^= s;
                    target |= t;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let mut e2 = out.zero_exps();
        let mut deg = m.count_ones();
        for x in 0..n {
            e2[0] += e[phi_var(x)];
            e2[1] += e[phibar_var(x)];
            deg += u32::from(e[phi_var(x)]) + u32::from(e[phibar_var(x)]);
        }
        for k in 0..f.nparams() {
            e2[2 + k] = e[2 * n + k];
        }
        let v = c.mul_ref(&factor.pow(deg));
        out.add_term(target, e2, if neg { -v } else { v });
    }
    out
}

/// `S_A = Σ_{x,y} φ_x A_{xy} φ̄_y + ψ_x A_{xy} ψ̄_y`.
pub fn action<C: Scalar>(a: &[Vec<C>], nparams: usize) -> Form<C> {
    let n = a.len();
    let mut out = Form::zero(n, nparams);
    for (x, row) in a.iter().enumerate() {
        for (y, axy) in row.iter().enumerate() {
            let mut e = out.zero_exps();
            e[phi_var(x)] += 1;
            e[phibar_var(y)] += 1;
            out.add_term(0, e, axy.clone());
            let m = 1u128 << psi_bit(x);
            let mb = 1u128 << psibar_bit(y);
            if let Some(neg) = wedge_sign(m, mb) {
                let e0 = out.zero_exps();
                out.add_term(m | mb, e0, if neg { -axy.clone() } else { axy.clone() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{cq_real, Cq};

    type F = Form<Cq>;

    #[test]
    fn nilpotent_generators() {
        let t = F::psi(1, 0, 0).wedge(&F::psibar(1, 0, 0)).unwrap();
        assert!(t.wedge(&t).unwrap().is_zero());
    }

    #[test]
    fn anticommuting_signs() {
        let a = F::psi(2, 0, 0);
        let b = F::psibar(2, 0, 1);
        let ab = a.wedge(&b).unwrap();
        let ba = b.wedge(&a).unwrap();
        assert_eq!(ab, ba.negate());
    }

    #[test]
    fn tau_squared_has_bounded_grassmann_degree() {
        let t = F::tau(1, 0, 0);
        let t2 = t.wedge(&t).unwrap();
        assert!(t2.terms().all(|(m, _, _)| m.count_ones() <= 2));
        let mut e = t2.zero_exps();
        e[0] = 1;
        e[1] = 1;
        assert_eq!(t2.polys()[&0b11][&e], cq_real(2, 1));
    }

    #[test]
    fn even_forms_commute() {
        let x = F::tau(2, 0, 0).plus(&F::phi(2, 0, 1).wedge(&F::phibar(2, 0, 0)).unwrap()).unwrap();
        let y = F::psi(2, 0, 1).wedge(&F::psibar(2, 0, 0)).unwrap();
        assert_eq!(x.wedge(&y).unwrap(), y.wedge(&x).unwrap());
    }

    #[test]
    fn mismatched_site_sets_are_rejected() {
        assert!(F::tau(1, 0, 0).wedge(&F::tau(2, 0, 0)).is_err());
    }

    #[test]
    fn laplacian_kills_tau_and_pairs_fields() {
        let cov = |_: usize, _: usize| cq_real(3, 5);
        assert!(laplacian(&F::tau(1, 0, 0), &cov).is_zero());
        let pp = F::phi(2, 0, 0).wedge(&F::phibar(2, 0, 1)).unwrap();
        assert_eq!(laplacian(&pp, &cov), F::constant(2, 0, cq_real(3, 5)));
        assert!(laplacian(&F::constant(2, 0, cq_real(7, 1)), &cov).is_zero());
    }

    #[test]
    fn heat_on_boson_bilinear_adds_covariance() {
        let cov = |x: usize, y: usize| if x == y { cq_real(15, 16) } else { cq_real(-1, 16) };
        let pp = F::phi(2, 0, 0).wedge(&F::phibar(2, 0, 0)).unwrap();
        let expect = pp.plus(&F::constant(2, 0, cq_real(15, 16))).unwrap();
        assert_eq!(heat(&pp, &cov), expect);
        assert_eq!(heat(&F::tau(2, 0, 1), &cov), F::tau(2, 0, 1));
    }

    #[test]
    fn collapse_scales_and_merges() {
        let n = 16;
        let mut sum_tau = F::zero(n, 0);
        let mut sum_tau2 = F::zero(n, 0);
        for y in 0..n {
            let t = F::tau(n, 0, y);
            sum_tau = sum_tau.plus(&t).unwrap();
            sum_tau2 = sum_tau2.plus(&t.wedge(&t).unwrap()).unwrap();
        }
        let half = cq_real(1, 2);
        assert_eq!(collapse(&sum_tau, &half), F::tau(1, 0, 0).scale(&cq_real(4, 1)));
        let t = F::tau(1, 0, 0);
        assert_eq!(collapse(&sum_tau2, &half), t.wedge(&t).unwrap());
    }

    #[test]
    fn doubling_roundtrip_is_product() {
        let x = F::tau(2, 0, 0).plus(&F::psi(2, 0, 1).wedge(&F::phibar(2, 0, 0)).unwrap()).unwrap();
        let y = F::psibar(2, 0, 0).plus(&F::phi(2, 0, 1)).unwrap();
        assert_eq!(merge_doubled(&double(&x, &y).unwrap()), x.wedge(&y).unwrap());
    }

    #[test]
    fn action_matches_hand_expansion_one_site() {
        let a = vec![vec![cq_real(3, 2)]];
        let s = action(&a, 0);
        assert_eq!(s, F::tau(1, 0, 0).scale(&cq_real(3, 2)));
    }

    #[test]
    fn json_dump_lists_monomials() {
        let v = F::tau(1, 0, 0).to_json();
        let obj = v.as_object().unwrap();
        assert!(obj.contains_key("0") && obj.contains_key("3"));
    }
}

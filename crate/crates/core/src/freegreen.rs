//! Exact free (`λ = 0`) Green's functions on the hierarchical lattice.
//!
//! The fluctuation covariance `Γ(β, ·)` is two-valued on `𝒢₁` and vanishes
//! outside it. The Dirichlet potential `U^{𝒢_N}(β, x)` is available both as
//! the scale sum over `Γ` and through the level eigenvalues of the generator.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierlattice::{n_of, process_constants, scale_down, scale_down_by, Site, DIM};
use crate::scalar::{Scalar, C64};

/// `Γ(β, ·)`: `on_site` at the origin, `off_site` on `𝒢₁ ∖ {0}`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaCov<C> {
    pub beta: C,
    pub l: u32,
    pub on_site: C,
    pub off_site: C,
}

fn block_size(l: u32) -> i64 {
    i64::from(l.pow(DIM))
}

/// `B = 1 − L^{−4}`.
pub fn big_b<C: Scalar>(l: u32) -> C {
    let n = block_size(l);
    C::ratio(n - 1, n)
}

fn inv_one_plus<C: Scalar>(beta: &C) -> Result<C> {
    (C::one() + beta.clone())
        .inv()
        .ok_or_else(|| Error::Singular("1 + beta = 0".into()))
}

impl<C: Scalar> GammaCov<C> {
    pub fn new(beta: &C, l: u32) -> Result<Self> {
        let g = inv_one_plus(beta)?;
        let n = block_size(l);
        Ok(GammaCov {
            beta: beta.clone(),
            l,
            on_site: big_b::<C>(l).mul_ref(&g),
            off_site: C::ratio(-1, n).mul_ref(&g),
        })
    }

    /// Builds the covariance from an explicit scalar `g` standing for `(1+β)^{−1}`.
    pub fn from_scalar(beta: &C, g: &C, l: u32) -> Self {
        let n = block_size(l);
        GammaCov {
            beta: beta.clone(),
            l,
            on_site: big_b::<C>(l).mul_ref(g),
            off_site: C::ratio(-1, n).mul_ref(g),
        }
    }

    pub fn at(&self, x: &Site) -> C {
        if x.is_zero() {
            self.on_site.clone()
        } else if x.in_ball(1) {
            self.off_site.clone()
        } else {
            C::zero()
        }
    }

    /// Value between block sites labelled by their digit `0..n`.
    pub fn between(&self, a: usize, b: usize) -> C {
        if a == b {
            self.on_site.clone()
        } else {
            self.off_site.clone()
        }
    }

    /// `Σ_y Γ(y)`.
    pub fn total(&self) -> C {
        self.on_site.clone() + C::from_i64(block_size(self.l) - 1).mul_ref(&self.off_site)
    }

    /// `B_p = Σ_y Γ(y)^p`.
    pub fn moment(&self, p: u32) -> C {
        self.on_site.pow(p) + C::from_i64(block_size(self.l) - 1).mul_ref(&self.off_site.pow(p))
    }

    /// `Σ_y Γ(y) Γ(y − s)` for `s` in `𝒢₁`; equals `B₂` at `s = 0`.
    pub fn self_convolution(&self, s_is_origin: bool) -> C {
        if s_is_origin {
            return self.moment(2);
        }
        let n = block_size(self.l);
        C::from_i64(2).mul_ref(&self.on_site).mul_ref(&self.off_site)
            + C::from_i64(n - 2).mul_ref(&self.off_site.pow(2))
    }

    /// Dense `|𝒢₁| × |𝒢₁|` matrix `Γ(x − y)` (diagnostics only).
    pub fn dense_block(&self) -> DMatrix<C64> {
        let n = block_size(self.l) as usize;
        DMatrix::from_fn(n, n, |a, b| self.between(a, b).to_c64())
    }
}

/// `Γ(β, x)`.
pub fn gamma<C: Scalar>(beta: &C, x: &Site) -> Result<C> {
    Ok(GammaCov::new(beta, x.l())?.at(x))
}

/// `B_p(β) = (1+β)^{−p} [B^p + (L⁴ − 1)(−L^{−4})^p]`.
pub fn b_p<C: Scalar>(beta: &C, p: u32, l: u32) -> Result<C> {
    if p == 0 {
        return Err(Error::Input("B_p requires p >= 1".into()));
    }
    let g = inv_one_plus(beta)?;
    let n = block_size(l);
    let bracket = big_b::<C>(l).pow(p) + C::from_i64(n - 1).mul_ref(&C::ratio(-1, n).pow(p));
    Ok(g.pow(p).mul_ref(&bracket))
}

fn l_pow<C: Scalar>(l: u32, e: i32) -> C {
    let lc = C::from_i64(i64::from(l));
    if e >= 0 {
        lc.pow(e as u32)
    } else {
        C::one().div_exact(&lc.pow((-e) as u32)).expect("L > 0")
    }
}

fn check_volume(x: &Site, n: u32) -> Result<()> {
    if !x.in_ball(n) {
        return Err(Error::Domain(format!("site {x} lies outside the volume G_{n}")));
    }
    Ok(())
}

/// Dirichlet potential on `𝒢_N` by the scale sum
/// `Σ_{j<N} L^{−2j} Γ(L^{2j}β, L^{−j}x) + L^{−2N}(r + L^{2N}β)^{−1} 1_{𝒢₀}(L^{−N}x)`.
pub fn u_finite<C: Scalar>(beta: &C, x: &Site, n: u32, l: u32) -> Result<C> {
    check_volume(x, n)?;
    let params = process_constants(l)?;
    let r = C::from_cq(&num_complex::Complex::new(params.rate_r.clone(), num_traits::Zero::zero()));
    let mut total = C::zero();
    let first = n_of(x).saturating_sub(1);
    for j in first..n {
        let scale = l_pow::<C>(l, 2 * j as i32);
        let bj = scale.mul_ref(beta);
        let xj = scale_down_by(x, j);
        let g = gamma(&bj, &xj)?;
        total = total + g.mul_ref(&l_pow::<C>(l, -2 * j as i32));
    }
    let top = l_pow::<C>(l, 2 * n as i32);
    let denom = (r + top.mul_ref(beta))
        .inv()
        .ok_or_else(|| Error::Singular("r + L^{2N} beta = 0".into()))?;
    Ok(total + denom.mul_ref(&l_pow::<C>(l, -2 * n as i32)))
}

/// Dirichlet potential from the level eigenvalues `ψ_j = γ n^j L^{−αj}` on
/// `ℋ_j ∖ ℋ_{j+1}` and `r n^N L^{−αN}` on `ℋ_N`.
pub fn u_spectral<C: Scalar>(beta: &C, x: &Site, n: u32, l: u32) -> Result<C> {
    check_volume(x, n)?;
    let params = process_constants(l)?;
    let zero_q = num_traits::Zero::zero();
    let gamma_c = C::from_cq(&num_complex::Complex::new(params.gamma_const.clone(), zero_q));
    let r = C::from_cq(&num_complex::Complex::new(params.rate_r.clone(), num_traits::Zero::zero()));
    let nn = C::from_i64(i64::from(params.n));
    let alpha = params.alpha as i32;
    let level = |j: u32| -> C { nn.pow(j).mul_ref(&l_pow::<C>(l, -alpha * j as i32)) };
    let ind = |k: u32| -> C {
        if x.in_ball(k) {
            C::one()
        } else {
            C::zero()
        }
    };
    let inv_n = nn.inv().expect("n > 0");
    let mut total = C::zero();
    for j in 0..n {
        let psi = gamma_c.mul_ref(&level(j));
        let res = (beta.clone() + psi)
            .inv()
            .ok_or_else(|| Error::Singular(format!("beta + psi_{j} = 0")))?;
        let weight = inv_n.pow(j).mul_ref(&(ind(j) - inv_n.mul_ref(&ind(j + 1))));
        total = total + res.mul_ref(&weight);
    }
    let psi_n = r.mul_ref(&level(n));
    let res = (beta.clone() + psi_n)
        .inv()
        .ok_or_else(|| Error::Singular("beta + r n^N L^{-alpha N} = 0".into()))?;
    Ok(total + res.mul_ref(&inv_n.pow(n).mul_ref(&ind(n))))
}

/// Default relative truncation tolerance for [`u_infinite`].
pub const U_INFINITE_TOL: f64 = 1e-14;

/// Infinite-volume potential `Σ_{l≥0} L^{−2l} Γ(L^{2l}β, L^{−l}x)`.
///
/// Summation stops once `L^{−2l}|B| / |1 + L^{2l}β|` falls below
/// `tol · |partial sum|`.
pub fn u_infinite(beta: C64, x: &Site, tol: f64) -> Result<C64> {
    let l = x.l();
    if beta.norm() == 0.0 && x.is_zero() {
        return Err(Error::Numerical("u_infinite diverges at beta = 0, x = 0".into()));
    }
    let lf = f64::from(l);
    let b = big_b::<C64>(l).re;
    let start = n_of(x).saturating_sub(1);
    let support = n_of(x).max(1);
    let mut total = C64::new(0.0, 0.0);
    let mut xl = scale_down_by(x, start);
    let mut lev = start;
    loop {
        let s2 = lf.powi(2 * lev as i32);
        let bl = beta * s2;
        let term = gamma(&bl, &xl)? / s2;
        total += term;
        if lev >= support {
            let bound = b / ((C64::new(1.0, 0.0) + bl).norm() * s2);
            if bound < tol * total.norm() {
                break;
            }
        }
        if lev > 4000 {
            return Err(Error::Numerical("u_infinite failed to converge".into()));
        }
        xl = scale_down(&xl);
        lev += 1;
    }
    Ok(total)
}

/// Residual of `U_N(β,x) = L^{−2} U_{N−1}(L²β, L^{−1}x) + Γ(β,x)`.
pub fn scale_decomposition_residual<C: Scalar>(beta: &C, x: &Site, n: u32, l: u32) -> Result<C> {
    if n == 0 {
        return Err(Error::Input("scale decomposition needs N >= 1".into()));
    }
    let lhs = u_finite(beta, x, n, l)?;
    let l2 = C::from_i64(i64::from(l * l));
    let inner = u_finite(&l2.mul_ref(beta), &scale_down(x), n - 1, l)?;
    let rhs = inner.div_exact(&l2).expect("L > 0") + gamma(beta, x)?;
    Ok(lhs - rhs)
}

/// One row of the free Green's function table.
#[derive(Clone, Debug, Serialize)]
pub struct FreeGreenRecord {
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub beta_re: f64,
    pub beta_im: f64,
    pub x: String,
    #[serde(rename = "U_re")]
    pub u_re: f64,
    #[serde(rename = "U_im")]
    pub u_im: f64,
}

impl FreeGreenRecord {
    pub const CSV_HEADER: &'static str = "L,N,beta_re,beta_im,x,U_re,U_im";

    pub fn new(l: u32, n: u32, beta: C64, x: &Site, u: C64) -> Self {
        FreeGreenRecord {
            l,
            n,
            beta_re: beta.re,
            beta_im: beta.im,
            x: x.to_string(),
            u_re: u.re,
            u_im: u.im,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{},{:e},{:e}",
            self.l, self.n, self.beta_re, self.beta_im, self.x, self.u_re, self.u_im
        )
    }
}

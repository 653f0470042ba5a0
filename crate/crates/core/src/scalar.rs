//! Coefficient rings shared by the symbolic and numeric engines.
//!
//! Three rings implement [`Scalar`]:
//! - [`Cq`]: exact complex rationals, used by every symbolic identity check;
//! - [`C64`]: complex floating point, used by quadrature and flows;
//! - [`Cs`]: Laurent polynomials in the formal symbol `s = (2πi)^{1/2}` with
//!   [`Cq`] coefficients, so that `d`, `i_X` and `Q` stay exact.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;
pub type Cq = Complex<BigRational>;
pub type C64 = Complex<f64>;

/// Exact rational `n/d`.
pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact complex rational `(re_n/re_d) + i (im_n/im_d)`.
pub fn cq(re: Q, im: Q) -> Cq {
    Complex::new(re, im)
}

/// Exact real rational embedded in [`Cq`].
pub fn cq_real(n: i64, d: i64) -> Cq {
    Complex::new(q(n, d), Q::zero())
}

pub fn q_to_f64(x: &Q) -> f64 {
    match x.to_f64() {
        Some(v) => v,
        None => {
            let n = x.numer().to_f64().unwrap_or(f64::NAN);
            let d = x.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

pub fn cq_to_c64(z: &Cq) -> C64 {
    C64::new(q_to_f64(&z.re), q_to_f64(&z.im))
}

/// Closest simple rational to a float, by continued fractions with a denominator cap.
pub fn q_from_f64(x: f64, max_den: i64) -> Q {
    BigRational::from_float(x)
        .map(|r| limit_denominator(&r, max_den))
        .unwrap_or_else(Q::zero)
}

fn limit_denominator(r: &Q, max_den: i64) -> Q {
    let max_den = BigInt::from(max_den);
    if r.denom() <= &max_den {
        return r.clone();
    }
    let (mut p0, mut q0, mut p1, mut q1) = (
        BigInt::zero(),
        BigInt::one(),
        BigInt::one(),
        BigInt::zero(),
    );
    let mut n = r.numer().clone();
    let mut d = r.denom().clone();
    loop {
        let a = n.clone() / d.clone();
        let q2 = q0.clone() + a.clone() * q1.clone();
        if q2 > max_den {
            break;
        }
        let p2 = p0 + a.clone() * p1.clone();
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let rem = n - a * d.clone();
        n = d;
        d = rem;
        if d.is_zero() {
            break;
        }
    }
    BigRational::new(p1, q1)
}

/// Commutative coefficient ring used by forms.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_cq(z: &Cq) -> Self;
    fn to_c64(&self) -> C64;
    /// Multiplicative inverse when it exists in the ring.
    fn inv(&self) -> Option<Self>;

    fn mul_ref(&self, other: &Self) -> Self {
        self.clone() * other.clone()
    }
    fn add_ref(&self, other: &Self) -> Self {
        self.clone() + other.clone()
    }
    fn from_i64(v: i64) -> Self {
        Self::from_cq(&cq_real(v, 1))
    }
    fn ratio(n: i64, d: i64) -> Self {
        Self::from_cq(&cq_real(n, d))
    }
    fn imag_unit() -> Self {
        Self::from_cq(&Complex::new(Q::zero(), Q::one()))
    }
    fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc.mul_ref(self);
        }
        acc
    }
    fn div_exact(&self, other: &Self) -> Option<Self> {
        other.inv().map(|i| self.mul_ref(&i))
    }
}

impl Scalar for Cq {
    fn zero() -> Self {
        <Cq as Zero>::zero()
    }
    fn one() -> Self {
        <Cq as One>::one()
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn from_cq(z: &Cq) -> Self {
        z.clone()
    }
    fn to_c64(&self) -> C64 {
        cq_to_c64(self)
    }
    fn inv(&self) -> Option<Self> {
        let n = &self.re * &self.re + &self.im * &self.im;
        if n.is_zero() {
            None
        } else {
            Some(Complex::new(&self.re / &n, -(&self.im / &n)))
        }
    }
    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }
    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn from_cq(z: &Cq) -> Self {
        cq_to_c64(z)
    }
    fn ratio(n: i64, d: i64) -> Self {
        C64::new(n as f64 / d as f64, 0.0)
    }
    fn to_c64(&self) -> C64 {
        *self
    }
    fn inv(&self) -> Option<Self> {
        if Scalar::is_zero(self) {
            None
        } else {
            Some(C64::new(1.0, 0.0) / self)
        }
    }
}

/// Rings that can represent `s = (2πi)^{1/2}` (fixed branch `e^{iπ/4}√(2π)`).
pub trait SusyScalar: Scalar {
    /// `s = (2πi)^{1/2}`.
    fn sqrt_two_pi_i() -> Self;
    /// `s^{-1} = (2πi)^{-1/2}`.
    fn inv_sqrt_two_pi_i() -> Self;
}

pub fn sqrt_two_pi_i_c64() -> C64 {
    C64::from_polar((2.0 * std::f64::consts::PI).sqrt(), std::f64::consts::FRAC_PI_4)
}

impl SusyScalar for C64 {
    fn sqrt_two_pi_i() -> Self {
        sqrt_two_pi_i_c64()
    }
    fn inv_sqrt_two_pi_i() -> Self {
        C64::new(1.0, 0.0) / sqrt_two_pi_i_c64()
    }
}

/// Laurent polynomial `Σ_k c_k s^k` in the formal symbol `s = (2πi)^{1/2}`.
///
/// `s` is kept transcendental-free: `s²` is not reduced to `2πi`, so
/// identities hold coefficientwise.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Cs {
    terms: BTreeMap<i32, Cq>,
}

impl Cs {
    pub fn monomial(c: Cq, k: i32) -> Self {
        let mut terms = BTreeMap::new();
        if !Scalar::is_zero(&c) {
            terms.insert(k, c);
        }
        Cs { terms }
    }

    pub fn s_pow(k: i32) -> Self {
        Self::monomial(<Cq as Scalar>::one(), k)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &Cq)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }

    fn accumulate(&mut self, k: i32, c: Cq) {
        let e = self.terms.entry(k).or_insert_with(<Cq as Scalar>::zero);
        *e = &*e + &c;
        if Scalar::is_zero(e) {
            self.terms.remove(&k);
        }
    }
}

impl Add for Cs {
    type Output = Cs;
    fn add(mut self, rhs: Cs) -> Cs {
        for (k, c) in rhs.terms {
            self.accumulate(k, c);
        }
        self
    }
}

impl Sub for Cs {
    type Output = Cs;
    fn sub(self, rhs: Cs) -> Cs {
        self + (-rhs)
    }
}

impl Neg for Cs {
    type Output = Cs;
    fn neg(self) -> Cs {
        Cs {
            terms: self.terms.into_iter().map(|(k, c)| (k, -c)).collect(),
        }
    }
}

impl Mul for Cs {
    type Output = Cs;
    fn mul(self, rhs: Cs) -> Cs {
        self.mul_ref(&rhs)
    }
}

impl Scalar for Cs {
    fn zero() -> Self {
        Cs::default()
    }
    fn one() -> Self {
        Cs::s_pow(0)
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_cq(z: &Cq) -> Self {
        Cs::monomial(z.clone(), 0)
    }
    fn to_c64(&self) -> C64 {
        let s = sqrt_two_pi_i_c64();
        self.terms
            .iter()
            .map(|(k, c)| cq_to_c64(c) * s.powi(*k))
            .sum()
    }
    fn inv(&self) -> Option<Self> {
        if self.terms.len() != 1 {
            return None;
        }
        let (k, c) = self.terms.iter().next()?;
        Some(Cs::monomial(Scalar::inv(c)?, -k))
    }
    fn mul_ref(&self, other: &Self) -> Self {
        let mut out = Cs::default();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &other.terms {
                out.accumulate(k1 + k2, c1 * c2);
            }
        }
        out
    }
}

impl SusyScalar for Cs {
    fn sqrt_two_pi_i() -> Self {
        Cs::s_pow(1)
    }
    fn inv_sqrt_two_pi_i() -> Self {
        Cs::s_pow(-1)
    }
}

/// Absolute value of an exact rational as a float.
pub fn q_abs_f64(x: &Q) -> f64 {
    q_to_f64(&x.abs())
}

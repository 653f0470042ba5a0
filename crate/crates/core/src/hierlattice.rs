//! Hierarchical group arithmetic for `⊕ᵢ Z_n`, `n = L⁴`.
//!
//! A [`Site`] stores its digits least-significant first with trailing zeros
//! trimmed, so structural equality is group equality. The ball `𝒢_k` is the
//! set of sites whose digits vanish from index `k` on, and the norm is
//! `|x| = L^k` for `x ∈ 𝒢_k ∖ 𝒢_{k−1}`.

use std::fmt;

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{q, q_to_f64, Q};

/// Jump exponent of the hierarchical Lévy process.
pub const ALPHA: u32 = 6;
/// Lattice dimension.
pub const DIM: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    l: u32,
    digits: Vec<u32>,
}

impl Site {
    pub fn zero(l: u32) -> Site {
        Site { l, digits: Vec::new() }
    }

    /// Builds a site from digits, least significant first; trailing zeros are trimmed.
    pub fn new(l: u32, digits: Vec<u32>) -> Result<Site> {
        if l < 2 {
            return Err(Error::Input(format!("scale factor L must be >= 2, got {l}")));
        }
        let n = l.pow(DIM);
        if let Some(d) = digits.iter().find(|&&d| d >= n) {
            return Err(Error::Input(format!("digit {d} out of range [0, {})", n)));
        }
        let mut s = Site { l, digits };
        s.trim();
        Ok(s)
    }

    /// Decodes `idx = Σ dᵢ nⁱ`.
    pub fn from_index(l: u32, mut idx: u64) -> Site {
        let n = u64::from(l.pow(DIM));
        let mut digits = Vec::new();
        while idx > 0 {
            digits.push((idx % n) as u32);
            idx /= n;
        }
        Site { l, digits }
    }

    pub fn to_index(&self) -> u64 {
        let n = u64::from(self.n());
        self.digits.iter().rev().fold(0u64, |acc, &d| acc * n + u64::from(d))
    }

    /// Parses the dot-separated text format, e.g. `"3.0.1"`; the empty string is the zero site.
    pub fn parse(text: &str, l: u32) -> Result<Site> {
        let t = text.trim();
        if t.is_empty() || t == "0" {
            return Site::new(l, Vec::new());
        }
        let digits = t
            .split('.')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Input(format!("bad site digit '{p}' in '{text}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Site::new(l, digits)
    }

    fn trim(&mut self) {
        while self.digits.last() == Some(&0) {
            self.digits.pop();
        }
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn n(&self) -> u32 {
        self.l.pow(DIM)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn digit(&self, i: usize) -> u32 {
        self.digits.get(i).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    /// Whether the site lies in the ball `𝒢_k`.
    pub fn in_ball(&self, k: u32) -> bool {
        self.digits.len() <= k as usize
    }

    pub fn add(&self, other: &Site) -> Site {
        self.combine(other, |a, b, n| (a + b) % n)
    }

    pub fn sub(&self, other: &Site) -> Site {
        self.combine(other, |a, b, n| (a + n - b) % n)
    }

    fn combine(&self, other: &Site, f: impl Fn(u32, u32, u32) -> u32) -> Site {
        let n = self.n();
        let len = self.digits.len().max(other.digits.len());
        let digits = (0..len).map(|i| f(self.digit(i), other.digit(i), n)).collect();
        let mut s = Site { l: self.l, digits };
        s.trim();
        s
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.digits.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// `|x|`: 0 for the zero site, else `L^k` with `k = n_of(x)`.
pub fn hier_norm(x: &Site) -> f64 {
    if x.is_zero() {
        0.0
    } else {
        f64::from(x.l).powi(n_of(x) as i32)
    }
}

/// `N(x) = log_L |x|`, with `N(0) = 0`.
pub fn n_of(x: &Site) -> u32 {
    x.digits.len() as u32
}

/// `L^{-1}x`: drops digit 0.
pub fn scale_down(x: &Site) -> Site {
    Site {
        l: x.l,
        digits: x.digits.iter().skip(1).copied().collect(),
    }
}

/// `L^{-j}x`.
pub fn scale_down_by(x: &Site, j: u32) -> Site {
    Site {
        l: x.l,
        digits: x.digits.iter().skip(j as usize).copied().collect(),
    }
}

/// Group metric `|x − y|`.
pub fn hier_dist(x: &Site, y: &Site) -> f64 {
    hier_norm(&x.sub(y))
}

/// All `n^k` sites of `𝒢_k`, in index order.
pub fn ball(l: u32, k: u32) -> Vec<Site> {
    let count = u64::from(l.pow(DIM)).pow(k);
    (0..count).map(|i| Site::from_index(l, i)).collect()
}

/// Process constants of the hierarchical Lévy process with `q(x) = c|x|^{−α}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeParams {
    pub l: u32,
    pub alpha: u32,
    pub d: u32,
    pub n: u32,
    /// `γ = (1 − L^{−2}) / (1 − L^{4−α})`.
    pub gamma_const: Q,
    /// `r = γ (1 − L^{2−α}) / (1 − L^{−α})`.
    pub rate_r: Q,
    /// `c` such that the jump law has total mass one.
    pub jump_norm_c: Q,
}

impl LatticeParams {
    pub fn gamma_f64(&self) -> f64 {
        q_to_f64(&self.gamma_const)
    }
    pub fn rate_f64(&self) -> f64 {
        q_to_f64(&self.rate_r)
    }
    pub fn c_f64(&self) -> f64 {
        q_to_f64(&self.jump_norm_c)
    }
    /// `ρ = n L^{−α}`: the law puts mass `ρ^{k}` outside `𝒢_k`.
    pub fn escape_ratio(&self) -> Q {
        lpow(self.l, 4 - self.alpha as i32)
    }
}

fn lpow(l: u32, e: i32) -> Q {
    let base = q(i64::from(l), 1);
    if e >= 0 {
        num_traits::pow(base, e as usize)
    } else {
        Q::one() / num_traits::pow(base, (-e) as usize)
    }
}

/// Process constants at the default exponent `α = 6`.
pub fn process_constants(l: u32) -> Result<LatticeParams> {
    process_constants_alpha(l, ALPHA)
}

/// Process constants for a general integer jump exponent `α > 4`.
pub fn process_constants_alpha(l: u32, alpha: u32) -> Result<LatticeParams> {
    if l < 2 {
        return Err(Error::Input(format!("scale factor L must be >= 2, got {l}")));
    }
    if alpha <= DIM {
        return Err(Error::Input(format!("jump exponent must exceed {DIM}, got {alpha}")));
    }
    let a = alpha as i32;
    let one = Q::one();
    let gamma_const = (&one - lpow(l, -2)) / (&one - lpow(l, 4 - a));
    let rate_r = &gamma_const * (&one - lpow(l, 2 - a)) / (&one - lpow(l, -a));
    let n = l.pow(DIM);
    let jump_norm_c = (&one - lpow(l, 4 - a)) * lpow(l, a) / q(i64::from(n) - 1, 1);
    Ok(LatticeParams {
        l,
        alpha,
        d: DIM,
        n,
        gamma_const,
        rate_r,
        jump_norm_c,
    })
}

/// `q(x) = c|x|^{−α}`, `q(0) = 0`.
pub fn jump_prob(x: &Site, params: &LatticeParams) -> f64 {
    if x.is_zero() {
        0.0
    } else {
        params.c_f64() * hier_norm(x).powi(-(params.alpha as i32))
    }
}

/// Exact mass of the shell `𝒢_k ∖ 𝒢_{k−1}`, `k ≥ 1`.
pub fn shell_mass(params: &LatticeParams, k: u32) -> Q {
    if k == 0 {
        return Q::zero();
    }
    let rho = params.escape_ratio();
    num_traits::pow(rho.clone(), (k - 1) as usize) - num_traits::pow(rho, k as usize)
}

/// Exact mass `Σ_{𝒢_k} q = 1 − (n L^{−α})^k`.
pub fn ball_mass(params: &LatticeParams, k: u32) -> Q {
    Q::one() - num_traits::pow(params.escape_ratio(), k as usize)
}

/// Draws the shell level of one jump from the untruncated law.
///
/// A zero uniform (only produced by a degenerate stream) is reported as an error.
pub fn sample_jump_level<R: Rng + ?Sized>(rng: &mut R, params: &LatticeParams) -> Result<u32> {
    sample_jump_level_ln(rng, q_to_f64(&params.escape_ratio()).ln())
}

/// [`sample_jump_level`] with `ln ρ` precomputed.
pub fn sample_jump_level_ln<R: Rng + ?Sized>(rng: &mut R, ln_rho: f64) -> Result<u32> {
    let u: f64 = rng.random();
    if u <= 0.0 || u.is_nan() {
        return Err(Error::Numerical("degenerate random stream in jump sampler".into()));
    }
    let k = 1.0 + (u.ln() / ln_rho).floor();
    if !(1.0..=f64::from(u32::MAX)).contains(&k) {
        return Err(Error::Numerical("degenerate random stream in jump sampler".into()));
    }
    Ok(k as u32)
}

/// Draws a uniform site of the shell `𝒢_k ∖ 𝒢_{k−1}`.
pub fn sample_in_shell<R: Rng + ?Sized>(rng: &mut R, l: u32, k: u32) -> Site {
    let n = l.pow(DIM);
    let mut digits: Vec<u32> = (0..k.saturating_sub(1)).map(|_| rng.random_range(0..n)).collect();
    if k > 0 {
        digits.push(rng.random_range(1..n));
    }
    Site { l, digits }
}

/// Draws a jump from the law conditioned on landing in `𝒢_{max_level}`.
pub fn sample_jump<R: Rng + ?Sized>(rng: &mut R, params: &LatticeParams, max_level: u32) -> Result<Site> {
    if max_level == 0 {
        return Err(Error::Input("max_level must be >= 1".into()));
    }
    let v: f64 = rng.random();
    let rho = q_to_f64(&params.escape_ratio());
    let threshold = 1.0 - (1.0 - v) * (1.0 - rho.powi(max_level as i32));
    let mut k = 1u32;
    let mut rk = rho;
    while rk >= threshold {
        k += 1;
        rk *= rho;
        if k > max_level {
            return Err(Error::Numerical("degenerate random stream in jump sampler".into()));
        }
    }
    Ok(sample_in_shell(rng, params.l, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(digits: &[u32]) -> Site {
        Site::new(2, digits.to_vec()).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(hier_norm(&Site::zero(2)), 0.0);
        assert_eq!(hier_norm(&s(&[3])), 2.0);
        assert_eq!(hier_norm(&s(&[0, 5])), 4.0);
        assert_eq!(n_of(&s(&[0, 0, 7])), 3);
        assert_eq!(n_of(&s(&[1])), 1);
        assert_eq!(n_of(&Site::zero(2)), 0);
    }

    #[test]
    fn trailing_zeros_are_trimmed() {
        assert_eq!(s(&[1, 0, 0]), s(&[1]));
        assert!(s(&[0, 0]).is_zero());
        assert!(Site::new(2, vec![16]).is_err());
    }

    #[test]
    fn scale_down_examples() {
        assert_eq!(scale_down(&s(&[4, 5, 6])), s(&[5, 6]));
        assert!(scale_down(&Site::zero(2)).is_zero());
        let x = s(&[1, 2, 3]);
        let mut y = x.clone();
        for _ in 0..n_of(&x) {
            y = scale_down(&y);
        }
        assert!(y.is_zero());
    }

    #[test]
    fn scale_down_maps_balls_onto_balls() {
        let mut images: Vec<Site> = ball(2, 2).iter().map(scale_down).collect();
        images.sort();
        images.dedup();
        assert_eq!(images, {
            let mut b = ball(2, 1);
            b.sort();
            b
        });
    }

    #[test]
    fn dist_examples() {
        assert_eq!(hier_dist(&s(&[1]), &s(&[1])), 0.0);
        assert_eq!(hier_dist(&s(&[1]), &s(&[2])), 2.0);
        assert_eq!(hier_dist(&s(&[1, 3]), &s(&[2, 3])), 2.0);
        assert_eq!(hier_dist(&s(&[1, 3]), &s(&[2])), 4.0);
    }

    #[test]
    fn ultrametric_and_symmetric_on_g2() {
        let b = ball(2, 2);
        for x in &b {
            for y in &b {
                assert_eq!(hier_dist(x, y), hier_dist(y, x));
            }
        }
        for x in b.iter().step_by(3) {
            for y in &b {
                for z in b.iter().step_by(5) {
                    assert!(hier_dist(x, z) <= hier_dist(x, y).max(hier_dist(y, z)));
                }
            }
        }
    }

    #[test]
    fn ball_sizes() {
        for k in 0..3 {
            let b = ball(2, k);
            assert_eq!(b.len() as u64, 16u64.pow(k));
            assert!(b.iter().all(|x| x.in_ball(k)));
        }
        for (i, x) in ball(2, 2).iter().enumerate() {
            assert_eq!(x.to_index(), i as u64);
        }
    }

    #[test]
    fn text_format_roundtrip() {
        let x = Site::parse("3.0.1", 2).unwrap();
        assert_eq!(x.digits(), &[3, 0, 1]);
        assert_eq!(x.to_string(), "3.0.1");
        assert!(Site::parse("", 2).unwrap().is_zero());
        assert!(Site::parse("1.x", 2).is_err());
    }

    #[test]
    fn constants_at_l2() {
        let p = process_constants(2).unwrap();
        assert_eq!(p.gamma_const, q(1, 1));
        assert_eq!(p.rate_r, q(20, 21));
        assert_eq!(p.jump_norm_c, q(16, 5));
        for l in 2..6 {
            assert_eq!(process_constants(l).unwrap().gamma_const, q(1, 1));
        }
    }

    #[test]
    fn shell_masses_sum_to_ball_mass() {
        let p = process_constants(2).unwrap();
        let mut acc = Q::zero();
        for k in 1..6 {
            acc += shell_mass(&p, k);
            assert_eq!(acc, ball_mass(&p, k));
            assert_eq!(ball_mass(&p, k), Q::one() - num_traits::pow(q(1, 4), k as usize));
        }
        assert_eq!(shell_mass(&p, 1), q(3, 4));
    }

    #[test]
    fn jump_prob_sums_to_shell_mass() {
        let p = process_constants(2).unwrap();
        assert_eq!(jump_prob(&Site::zero(2), &p), 0.0);
        let total: f64 = ball(2, 2).iter().map(|x| jump_prob(x, &p)).sum();
        assert!((total - (1.0 - 2f64.powi(-4))).abs() < 1e-12);
        let mut all = 0.0;
        let mut k = 1;
        while 2f64.powi(-2 * k) >= 1e-13 {
            all += q_to_f64(&shell_mass(&p, k as u32));
            k += 1;
        }
        assert!((all - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_jumps_are_nonzero_and_in_range() {
        let p = process_constants(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let x = sample_jump(&mut rng, &p, 3).unwrap();
            assert!(!x.is_zero());
            assert!(x.in_ball(3));
        }
    }

    struct ZeroRng;
    impl rand::RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn degenerate_stream_is_reported() {
        let p = process_constants(2).unwrap();
        assert!(sample_jump(&mut ZeroRng, &p, 3).is_err());
        assert!(sample_jump_level(&mut ZeroRng, &p).is_err());
    }
}

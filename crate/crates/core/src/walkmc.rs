//! Monte Carlo simulation of the hierarchical Lévy walk with local times.
//!
//! Every sample `i` draws from its own ChaCha8 stream `(seed, i)`, and
//! samples are reduced in fixed batches, so estimates do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierlattice::{hier_norm, process_constants, sample_in_shell, sample_jump_level_ln, LatticeParams, Site};
use crate::scalar::q_to_f64;
use crate::quad::{adaptive, gauss_legendre, half_line};
use crate::scalar::C64;

/// `∫₀^∞ e^{−βT − λT²} dT` for `Re λ > 0`, or `Re β > 0` when `λ = 0`.
pub fn single_site_closed_form(beta: C64, lambda: C64) -> Result<C64> {
    if lambda.norm() == 0.0 {
        if beta.re <= 0.0 {
            return Err(Error::Domain(format!("integral diverges for beta = {beta} at lambda = 0")));
        }
        return Ok(C64::new(1.0, 0.0) / beta);
    }
    if lambda.re <= 0.0 {
        return Err(Error::Domain(format!("integral needs Re lambda > 0, got {lambda}")));
    }
    let (ar, lr) = (beta.re, lambda.re);
    let f = move |t: f64| (-beta * t - lambda * t * t).exp();
    let tail = move |t: f64| {
        let slope = ar + 2.0 * lr * t;
        if slope <= 0.0 {
            f64::INFINITY
        } else {
            (-ar * t - lr * t * t).exp() / slope
        }
    };
    let peak = if ar >= 0.0 { 0.0 } else { -ar / (2.0 * lr) };
    let height = (-ar * peak - lr * peak * peak).exp();
    let width = (std::f64::consts::PI / lr).sqrt().min(if ar > 0.0 { 1.0 / ar } else { f64::INFINITY });
    Ok(half_line(&f, &tail, 1e-13 * height * width))
}

/// One path killed on leaving `𝒢_N` or stopped at `t_cap`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub sites: Vec<Site>,
    pub hold_times: Vec<f64>,
    /// Exit time from `𝒢_N`, or `+∞` when the path was stopped at `t_cap`.
    pub alive_until: f64,
}

impl WalkPath {
    pub fn duration(&self) -> f64 {
        self.hold_times.iter().sum()
    }

    /// Position at time `t`, `None` after the exit.
    pub fn position(&self, t: f64) -> Option<&Site> {
        let mut start = 0.0;
        for (s, h) in self.sites.iter().zip(&self.hold_times) {
            if t < start + h {
                return Some(s);
            }
            start += h;
        }
        None
    }

    pub fn local_times(&self) -> LocalTimes {
        let mut lt = LocalTimes::default();
        for (s, h) in self.sites.iter().zip(&self.hold_times) {
            lt.add(s, *h);
        }
        lt
    }
}

/// Accumulated time per site.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalTimes {
    entries: Vec<(Site, f64)>,
    sum_sq: f64,
}

impl LocalTimes {
    /// Adds `dt` to `τ_x`, returning the previous `τ_x`.
    pub fn add(&mut self, x: &Site, dt: f64) -> f64 {
        let slot = match self.entries.iter().position(|(s, _)| s == x) {
            Some(i) => i,
            None => {
                self.entries.push((x.clone(), 0.0));
                self.entries.len() - 1
            }
        };
        let old = self.entries[slot].1;
        let new = old + dt;
        self.entries[slot].1 = new;
        self.sum_sq += new * new - old * old;
        old
    }

    pub fn get(&self, x: &Site) -> f64 {
        self.entries.iter().find(|(s, _)| s == x).map_or(0.0, |e| e.1)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// `Σ_y τ_y²`, maintained incrementally.
    pub fn sum_of_squares(&self) -> f64 {
        self.sum_sq
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.entries.iter().map(|(s, t)| (s, *t))
    }
}

/// Per-sample stream `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn hold<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Process constants in floating point.
#[derive(Clone, Copy, Debug)]
struct WalkConsts {
    l: u32,
    n: u32,
    rate: f64,
    ln_rho: f64,
}

impl WalkConsts {
    fn new(params: &LatticeParams) -> Self {
        WalkConsts {
            l: params.l,
            n: params.n,
            rate: params.rate_f64(),
            ln_rho: q_to_f64(&params.escape_ratio()).ln(),
        }
    }
}

/// Next site after a jump, or `None` if the jump leaves `𝒢_N`.
fn jump<R: Rng + ?Sized>(rng: &mut R, params: &WalkConsts, from: &Site, n_volume: u32) -> Result<Option<Site>> {
    let k = sample_jump_level_ln(rng, params.ln_rho)?;
    if k > n_volume {
        return Ok(None);
    }
    Ok(Some(from.add(&sample_in_shell(rng, params.l, k))))
}

/// Simulates one path from the origin in `𝒢_N`, stopped at `t_cap`.
pub fn sample_path<R: Rng + ?Sized>(n_volume: u32, params: &LatticeParams, rng: &mut R, t_cap: f64) -> Result<WalkPath> {
    if !(t_cap > 0.0) {
        return Err(Error::Input(format!("t_cap must be positive, got {t_cap}")));
    }
    let params = &WalkConsts::new(params);
    let rate = params.rate;
    let mut path = WalkPath {
        sites: Vec::new(),
        hold_times: Vec::new(),
        alive_until: f64::INFINITY,
    };
    let mut site = Site::zero(params.l);
    let mut t = 0.0;
    loop {
        let h = hold(rng, rate);
        if t + h >= t_cap {
            path.sites.push(site);
            path.hold_times.push(t_cap - t);
            return Ok(path);
        }
        t += h;
        path.sites.push(site.clone());
        path.hold_times.push(h);
        match jump(rng, params, &site, n_volume)? {
            Some(next) => site = next,
            None => {
                path.alive_until = t;
                return Ok(path);
            }
        }
    }
}

/// Batch-means estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: [f64; 2],
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub batches: usize,
    pub warning: Option<String>,
}

impl McEstimate {
    pub fn value(&self) -> C64 {
        C64::new(self.mean[0], self.mean[1])
    }

    fn from_batches(batch_means: &[C64], n_samples: usize, seed: u64) -> Self {
        let nb = batch_means.len() as f64;
        let mean = pairwise_sum(batch_means) / nb;
        let var = batch_means.iter().map(|b| (b - mean).norm_sqr()).sum::<f64>() / (nb - 1.0);
        let std_error = (var / nb).sqrt();
        let warning = (std_error > 0.5 * mean.norm())
            .then(|| format!("large variance: std_error/|mean| = {:.3}", std_error / mean.norm()));
        McEstimate {
            mean: [mean.re, mean.im],
            std_error,
            n_samples,
            seed,
            batches: batch_means.len(),
            warning,
        }
    }
}

fn pairwise_sum(v: &[C64]) -> C64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Number of batches: 100 when there are enough samples, at least 30.
pub fn batch_count(n_samples: usize) -> Result<usize> {
    if n_samples < 30 {
        return Err(Error::Input(format!("need at least 30 samples for batch means, got {n_samples}")));
    }
    Ok(if n_samples >= 3000 { 100 } else { 30 })
}

/// Runs `per_sample` over fixed batches in parallel; each batch is summed in index order.
fn batched<T, F>(n_samples: usize, nb: usize, per_sample: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> Result<T> + Sync,
{
    (0..nb)
        .into_par_iter()
        .map(|b| {
            let lo = (b * n_samples / nb) as u64;
            let hi = ((b + 1) * n_samples / nb) as u64;
            per_sample(lo..hi)
        })
        .collect()
}

/// Local times keyed by site index, for the sampling loops.
#[derive(Default)]
struct IndexTimes {
    entries: Vec<(u64, f64)>,
    sum_sq: f64,
}

impl IndexTimes {
    fn get(&self, x: u64) -> f64 {
        self.entries.iter().find(|e| e.0 == x).map_or(0.0, |e| e.1)
    }

    fn add(&mut self, x: u64, dt: f64) {
        let slot = match self.entries.iter().position(|e| e.0 == x) {
            Some(i) => i,
            None => {
                self.entries.push((x, 0.0));
                self.entries.len() - 1
            }
        };
        let old = self.entries[slot].1;
        let new = old + dt;
        self.entries[slot].1 = new;
        self.sum_sq += new * new - old * old;
    }
}

/// Index form of [`jump`]; consumes the stream exactly like `sample_in_shell`.
fn jump_index<R: Rng + ?Sized>(rng: &mut R, params: &WalkConsts, from: u64, n_volume: u32) -> Result<Option<u64>> {
    let k = sample_jump_level_ln(rng, params.ln_rho)?;
    if k > n_volume {
        return Ok(None);
    }
    let n = params.n;
    let mut out = from;
    let mut place = 1u64;
    for i in 0..k {
        let d = if i + 1 < k { rng.random_range(0..n) } else { rng.random_range(1..n) };
        let cur = (from / place) % u64::from(n);
        let new = (cur + u64::from(d)) % u64::from(n);
        out = out - cur * place + new * place;
        place *= u64::from(n);
    }
    Ok(Some(out))
}

/// Interval contributions above this share of the running total are refined adaptively.
const REFINE_SHARE: f64 = 1e-3;

/// `∫₀^h e^{−a s − λ s²} ds`.
fn interval_integral(a: C64, lambda: f64, h: f64, rule: &(Vec<f64>, Vec<f64>)) -> C64 {
    let f = |s: f64| (-a * s - lambda * s * s).exp();
    let half = 0.5 * h;
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| f(half * (x + 1.0)) * (w * half))
        .sum()
}

/// Default time cap `10³/Re β`.
pub fn default_t_cap(beta: C64) -> f64 {
    if beta.re > 0.0 {
        1e3 / beta.re
    } else {
        f64::INFINITY
    }
}

/// One path's `∫₀^{T_exit} e^{−βT} 1_{ω(T)=x} e^{−λΣ_yτ_y(T)²} dT` for every
/// target index `x`, added into `out`.
#[allow(clippy::too_many_arguments)]
fn green_sample(
    beta: C64,
    lambda: f64,
    targets: &[u64],
    n_volume: u32,
    params: &WalkConsts,
    rng: &mut ChaCha8Rng,
    t_cap: f64,
    rule: &(Vec<f64>, Vec<f64>),
    out: &mut [C64],
) -> Result<()> {
    let rate = params.rate;
    let mut site = 0u64;
    let mut times = IndexTimes::default();
    let mut t = 0.0;
    loop {
        let full = hold(rng, rate);
        let h = full.min(t_cap - t);
        for (k, &x) in targets.iter().enumerate() {
            if x != site {
                continue;
            }
            let tau0 = times.get(site);
            let prefactor = (-beta * t - lambda * times.sum_sq).exp();
            let a = beta + 2.0 * lambda * tau0;
            let mut integral = interval_integral(a, lambda, h, rule);
            if (prefactor * integral).norm() > REFINE_SHARE * out[k].norm() {
                let f = |s: f64| (-a * s - lambda * s * s).exp();
                integral = adaptive(&f, 0.0, h, 1e-13 * integral.norm());
            }
            out[k] += prefactor * integral;
        }
        times.add(site, h);
        t += h;
        if t >= t_cap {
            return Ok(());
        }
        match jump_index(rng, params, site, n_volume)? {
            Some(next) => site = next,
            None => return Ok(()),
        }
    }
}

fn check_green_inputs(beta: C64, lambda: f64, xs: &[Site], n_volume: u32, t_cap: f64) -> Result<()> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("the walk needs lambda >= 0, got {lambda}")));
    }
    if xs.is_empty() {
        return Err(Error::Input("no target sites".into()));
    }
    if let Some(x) = xs.iter().find(|x| !x.in_ball(n_volume)) {
        return Err(Error::Domain(format!("site {x} lies outside the volume G_{n_volume}")));
    }
    if xs.iter().any(|x| x.l() != xs[0].l()) {
        return Err(Error::Input("target sites use different L".into()));
    }
    if beta.re <= 0.0 && !t_cap.is_finite() {
        return Err(Error::Domain("Re beta <= 0 needs a finite time cap".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of the finite-volume interacting Green's function
/// `G_λ^{𝒢_N}(β, x)`.
pub fn mc_green(beta: C64, lambda: f64, x: &Site, n_volume: u32, n_samples: usize, seed: u64) -> Result<McEstimate> {
    let mut v = mc_green_sites(beta, lambda, std::slice::from_ref(x), n_volume, n_samples, seed, default_t_cap(beta))?;
    Ok(v.remove(0))
}

/// Estimates for several targets from one set of paths.
pub fn mc_green_sites(
    beta: C64,
    lambda: f64,
    xs: &[Site],
    n_volume: u32,
    n_samples: usize,
    seed: u64,
    t_cap: f64,
) -> Result<Vec<McEstimate>> {
    check_green_inputs(beta, lambda, xs, n_volume, t_cap)?;
    let params = WalkConsts::new(&process_constants(xs[0].l())?);
    let nb = batch_count(n_samples)?;
    let rule = gauss_legendre(16);
    let targets: Vec<u64> = xs.iter().map(Site::to_index).collect();
    let means = batched(n_samples, nb, |range| {
        let count = (range.end - range.start) as f64;
        let mut per: Vec<Vec<C64>> = vec![Vec::with_capacity(range.clone().count()); targets.len()];
        let mut out = vec![C64::new(0.0, 0.0); targets.len()];
        for i in range {
            let mut rng = sample_rng(seed, i);
            out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
            green_sample(beta, lambda, &targets, n_volume, &params, &mut rng, t_cap, &rule, &mut out)?;
            for (p, o) in per.iter_mut().zip(&out) {
                p.push(*o);
            }
        }
        Ok(per.iter().map(|p| pairwise_sum(p) / count).collect::<Vec<_>>())
    })?;
    Ok((0..targets.len())
        .map(|k| {
            let col: Vec<C64> = means.iter().map(|m| m[k]).collect();
            McEstimate::from_batches(&col, n_samples, seed)
        })
        .collect())
}

/// `E(|ω(T)|² W)` and `E(W)` with `W = e^{−λΣ_yτ_y(T)²}`; killed paths have `W = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndToEnd {
    pub t: f64,
    pub lambda: f64,
    pub numerator: McEstimate,
    pub denominator: McEstimate,
    /// Ratio of batch totals.
    pub ratio: f64,
    pub ratio_std_error: f64,
    /// Per-batch ratios, aligned across runs with equal seeds.
    pub batch_ratios: Vec<f64>,
}

fn end_to_end_sample(t_end: f64, lambda: f64, n_volume: u32, params: &WalkConsts, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let rate = params.rate;
    let mut site = 0u64;
    let mut times = IndexTimes::default();
    let mut t = 0.0;
    loop {
        let h = hold(rng, rate);
        if t + h >= t_end {
            times.add(site, t_end - t);
            let w = (-lambda * times.sum_sq).exp();
            let norm = hier_norm(&Site::from_index(params.l, site));
            return Ok((norm * norm * w, w));
        }
        times.add(site, h);
        t += h;
        match jump_index(rng, params, site, n_volume)? {
            Some(next) => site = next,
            None => return Ok((0.0, 0.0)),
        }
    }
}

/// Weighted mean-square hierarchical displacement at time `T`.
pub fn mc_end_to_end(t_end: f64, lambda: f64, l: u32, n_volume: u32, n_samples: usize, seed: u64) -> Result<EndToEnd> {
    if !(t_end > 0.0) || !(lambda >= 0.0) {
        return Err(Error::Domain(format!("need T > 0 and lambda >= 0, got T = {t_end}, lambda = {lambda}")));
    }
    let params = WalkConsts::new(&process_constants(l)?);
    let nb = batch_count(n_samples)?;
    let sums = batched(n_samples, nb, |range| {
        let count = (range.end - range.start) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in range {
            let mut rng = sample_rng(seed, i);
            let (a, w) = end_to_end_sample(t_end, lambda, n_volume, &params, &mut rng)?;
            num += a;
            den += w;
        }
        Ok((num / count, den / count))
    })?;
    let nums: Vec<C64> = sums.iter().map(|s| C64::new(s.0, 0.0)).collect();
    let dens: Vec<C64> = sums.iter().map(|s| C64::new(s.1, 0.0)).collect();
    let numerator = McEstimate::from_batches(&nums, n_samples, seed);
    let denominator = McEstimate::from_batches(&dens, n_samples, seed);
    let ratio = numerator.mean[0] / denominator.mean[0];
    let nbf = nb as f64;
    let dbar = denominator.mean[0];
    let var = sums
        .iter()
        .map(|(a, w)| ((a - ratio * w) / dbar).powi(2))
        .sum::<f64>()
        / (nbf - 1.0);
    let batch_ratios = sums.iter().map(|(a, w)| a / w).collect();
    Ok(EndToEnd {
        t: t_end,
        lambda,
        numerator,
        denominator,
        ratio,
        ratio_std_error: (var / nbf).sqrt(),
        batch_ratios,
    })
}

/// Exact free (`λ = 0`) values `(E[|ω(T)|²; T < T_exit], P[T < T_exit])` in `𝒢_N`.
///
/// The level `K` of the position (`|ω| = L^K`) is itself a Markov chain: a
/// jump of level `k` moves `K` to `k` if `k > K`, leaves it if `k < K`, and
/// for `k = K` resets the top digit to zero with probability `1/(n−1)`, after
/// which the lower digits are uniform on `𝒢_{K−1}`.
pub fn free_msd_exact(t_end: f64, l: u32, n_volume: u32) -> Result<(f64, f64)> {
    if !(t_end >= 0.0) {
        return Err(Error::Domain(format!("need T >= 0, got {t_end}")));
    }
    let params = process_constants(l)?;
    let r = params.rate_f64();
    let rho = q_to_f64(&params.escape_ratio());
    let n = f64::from(params.n);
    let m = n_volume as usize + 1;
    let p = |k: usize| rho.powi(k as i32 - 1) * (1.0 - rho);
    let mut q = nalgebra::DMatrix::<f64>::zeros(m, m);
    for from in 0..m {
        q[(from, from)] -= r;
        for k in 1..m {
            let rate = r * p(k);
            if k > from || from == 0 {
                q[(from, k)] += rate;
            } else if k < from {
                q[(from, from)] += rate;
            } else {
                q[(from, from)] += rate * (n - 2.0) / (n - 1.0);
                let reset = rate / (n - 1.0);
                let span = n.powi(from as i32 - 1);
                q[(from, 0)] += reset / span;
                for i in 1..from {
                    q[(from, i)] += reset * (n.powi(i as i32) - n.powi(i as i32 - 1)) / span;
                }
            }
        }
    }
    let pt = (q * t_end).exp();
    let lf = f64::from(l);
    let mut msd = 0.0;
    let mut alive = 0.0;
    for k in 0..m {
        alive += pt[(0, k)];
        if k > 0 {
            msd += pt[(0, k)] * lf.powi(2 * k as i32);
        }
    }
    Ok((msd, alive))
}

/// CSV row for a Green's-function estimate.
pub const GREEN_CSV_HEADER: &str = "beta,lambda,x,N,estimate_re,estimate_im,std_error,n_samples,seed";

pub fn green_csv_row(beta: C64, lambda: f64, x: &Site, n_volume: u32, est: &McEstimate) -> String {
    format!(
        "{}{:+}i,{},{},{},{:e},{:e},{:e},{},{}",
        beta.re, beta.im, lambda, x, n_volume, est.mean[0], est.mean[1], est.std_error, est.n_samples, est.seed
    )
}

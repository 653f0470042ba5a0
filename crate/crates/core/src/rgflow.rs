//! Coupling flow `(β_j, λ_j)`, domains, the critical trajectory, the
//! observable `b`-flow and the Green's-function prediction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::freegreen::{big_b, u_infinite, GammaCov, U_INFINITE_TOL};
use crate::hierlattice::{n_of, process_constants, scale_down_by, Site, DIM};
use crate::perturbation::{second_order_step, Interaction};
use crate::scalar::{Cq, Scalar, C64};
use crate::walkmc::single_site_closed_form;

/// Truncation order of the `β` recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Order {
    /// `λ′ = λ − 8Bλ²g²`, `β′ = L²(β + 2Bλg)` with `g = (1+β)^{−1}`.
    Minimal,
    /// Adds `−4L²(B₂B₀ + B₃)λ²` to `β′`.
    AppendixC,
}

impl FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal" => Ok(Order::Minimal),
            "appendixC" | "appendixc" => Ok(Order::AppendixC),
            _ => Err(Error::Input(format!("unknown order {s:?} (minimal|appendixC)"))),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Minimal => "minimal",
            Order::AppendixC => "appendixC",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint {
    pub j: usize,
    pub beta: C64,
    pub lambda: C64,
}

impl FlowPoint {
    pub fn new(j: usize, beta: C64, lambda: C64) -> Self {
        FlowPoint { j, beta, lambda }
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

fn block_n(l: u32) -> f64 {
    f64::from(l).powi(DIM as i32)
}

/// `B³ + (n−1)(−1/n)³`, so that `B₃ = κ₃ g³`.
fn kappa3(l: u32) -> f64 {
    let n = block_n(l);
    let b = big_b::<C64>(l).re;
    b.powi(3) - (n - 1.0) / n.powi(3)
}

/// One step with the covariance scalar `Γ(0) = B/(1+β)` bound to `β`.
pub fn flow_step(p: &FlowPoint, l: u32, order: Order) -> Result<FlowPoint> {
    let denom = c(1.0) + p.beta;
    if denom.norm() == 0.0 {
        return Err(Error::Singular(format!("pole at beta = -1 (step {})", p.j)));
    }
    let b = big_b::<C64>(l).re;
    flow_step_cov(p, b / denom, l, order)
}

/// One step with an explicit covariance scalar `cov` standing for `Γ(0) = B/(1+β)`.
pub fn flow_step_cov(p: &FlowPoint, cov: C64, l: u32, order: Order) -> Result<FlowPoint> {
    let b = big_b::<C64>(l).re;
    let l2 = f64::from(l * l);
    let lam = p.lambda;
    let lambda = lam - lam * lam * cov * cov * (8.0 / b);
    let mut beta = (p.beta + lam * cov * 2.0) * l2;
    if order == Order::AppendixC {
        let g3 = (cov / b).powi(3);
        beta -= lam * lam * g3 * (4.0 * l2 * (b * b + kappa3(l)));
    }
    if !finite(beta) || !finite(lambda) {
        return Err(Error::Numerical(format!("flow overflow at step {}", p.j)));
    }
    Ok(FlowPoint::new(p.j + 1, beta, lambda))
}

/// Sector half-angles, radii and margins of the coupling domains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DomainParams {
    pub b_beta: f64,
    pub b_lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_bar: f64,
    pub rho: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        DomainParams {
            b_beta: 5.0 * PI / 8.0,
            b_lambda: PI / 8.0,
            epsilon: 0.05,
            delta: 0.05,
            delta_bar: 0.1,
            rho: 0.5,
        }
    }
}

impl DomainParams {
    pub fn validate(&self) -> Result<()> {
        let lhs = 2.0 * (self.b_beta + self.epsilon) + 1.5 * (self.b_lambda + self.epsilon);
        if !(lhs < 1.5 * PI) {
            return Err(Error::Input(format!(
                "sector angles violate 2(b_beta+eps) + 3/2(b_lambda+eps) < 3pi/2 ({lhs})"
            )));
        }
        if self.epsilon <= 0.0 || self.delta <= 0.0 || self.delta_bar < self.delta || self.rho < 0.0 {
            return Err(Error::Input("domain radii must be positive with delta <= delta_bar".into()));
        }
        Ok(())
    }

    /// Centre angle `θ` of the half-planes `H±`.
    pub fn h_theta(&self) -> f64 {
        self.b_beta + self.b_lambda / 4.0 + 9.0 * self.epsilon / 8.0 - PI / 2.0
    }
}

/// Which domain [`in_domain`] tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    D,
    Dbar,
    DbarRho,
    Hplus,
    Hminus,
}

/// Distance from `z` to the open sector `{w ≠ 0 : |arg w − centre| < half}`.
fn sector_distance(z: C64, centre: f64, half: f64) -> f64 {
    let w = z * C64::from_polar(1.0, -centre);
    if w.norm() == 0.0 {
        return 0.0;
    }
    if w.arg().abs() < half {
        return 0.0;
    }
    [half, -half]
        .iter()
        .map(|&phi| {
            let u = w * C64::from_polar(1.0, -phi);
            if u.re > 0.0 {
                u.im.abs()
            } else {
                u.norm()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn in_sector(z: C64, half: f64) -> bool {
    z.norm() > 0.0 && z.arg().abs() < half
}

fn lambda_in(lambda: C64, dp: &DomainParams, bar: bool) -> bool {
    let (half, radius) = if bar {
        (dp.b_lambda + dp.epsilon, dp.delta_bar)
    } else {
        (dp.b_lambda, dp.delta)
    };
    in_sector(lambda, half) && lambda.norm() < radius
}

/// Membership of `(β, λ)` in `𝒟`, `𝒟̄`, `𝒟̄(ρ)` or `H± × 𝒟̄_λ`.
pub fn in_domain(beta: C64, lambda: C64, dp: &DomainParams, which: Which) -> bool {
    let beta_ok = match which {
        Which::D => in_sector(beta, dp.b_beta),
        Which::Dbar => in_sector(beta, dp.b_beta + dp.epsilon),
        Which::DbarRho => sector_distance(beta, 0.0, dp.b_beta + dp.epsilon) < dp.rho,
        Which::Hplus | Which::Hminus => {
            let sign = if which == Which::Hplus { 1.0 } else { -1.0 };
            sector_distance(beta, sign * dp.h_theta(), PI / 2.0 - dp.epsilon / 8.0) < dp.rho
        }
    };
    beta_ok && lambda_in(lambda, dp, which != Which::D)
}

/// `𝒟̄_β(ρ) × 𝒟̄_λ`, with `λ = 0` admitted for the free flow.
fn flow_in_domain(p: &FlowPoint, dp: &DomainParams) -> bool {
    if p.lambda.norm() == 0.0 {
        sector_distance(p.beta, 0.0, dp.b_beta + dp.epsilon) < dp.rho
    } else {
        in_domain(p.beta, p.lambda, dp, Which::DbarRho)
    }
}

/// Leading-order critical value `−2BL²λ/(L² − 1)`.
pub fn beta_c_leading(lambda: C64, l: u32) -> C64 {
    let b = big_b::<C64>(l).re;
    let l2 = f64::from(l * l);
    -lambda * (2.0 * b * l2 / (l2 - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Exit {
    Above,
    Below,
    Bounded,
}

const SHOT_STEPS: usize = 400;

/// Follows a real start until `β_j > 1` or `β_j < −½`; returns the `β` record.
fn shoot(beta0: f64, lambda0: f64, l: u32, order: Order, j_max: usize) -> Result<(Exit, Vec<f64>)> {
    let mut p = FlowPoint::new(0, c(beta0), c(lambda0));
    let mut record = vec![beta0];
    for _ in 0..j_max {
        if p.beta.re > 1.0 {
            return Ok((Exit::Above, record));
        }
        if p.beta.re < -0.5 {
            return Ok((Exit::Below, record));
        }
        p = flow_step(&p, l, order)?;
        record.push(p.beta.re);
    }
    Ok((Exit::Bounded, record))
}

/// Bisection record of one critical-`β` search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalReport {
    pub lambda: [f64; 2],
    pub beta_c: [f64; 2],
    pub iterations: usize,
    /// `(lo, hi)` after each refinement.
    pub history: Vec<(f64, f64)>,
}

fn check_monotone(below: &[f64], above: &[f64], lambda0: f64) -> Result<()> {
    for (j, (a, b)) in below.iter().zip(above).enumerate() {
        let slack = 1e-12 * (a.abs() + b.abs() + lambda0.abs()) + 1e-300;
        if *a > *b + slack {
            return Err(Error::Numerical(format!(
                "monotonicity violated at step {j}: {a:e} > {b:e} for ordered starts"
            )));
        }
    }
    Ok(())
}

fn expand_until(
    mut guess: f64,
    step: f64,
    want: Exit,
    lambda0: f64,
    l: u32,
    order: Order,
    j_max: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut width = step;
    for _ in 0..200 {
        let (exit, rec) = shoot(guess, lambda0, l, order, j_max)?;
        if exit == want {
            return Ok((guess, rec));
        }
        guess += if want == Exit::Above { width } else { -width };
        width *= 2.0;
    }
    Err(Error::Numerical(format!(
        "critical beta bracket failure near {guess:e} for lambda = {lambda0:e}"
    )))
}

/// Bisection for real `λ₀` inside the starting bracket `[lo, hi]`.
fn bisect(lambda0: f64, lo: f64, hi: f64, step: f64, l: u32, order: Order, j_max: usize, tol: f64) -> Result<CriticalReport> {
    let (mut lo, mut lo_rec) = expand_until(lo, step, Exit::Below, lambda0, l, order, j_max)?;
    let (mut hi, mut hi_rec) = expand_until(hi, step, Exit::Above, lambda0, l, order, j_max)?;
    if lo > hi {
        return Err(Error::Numerical("critical beta bracket is inverted".into()));
    }
    check_monotone(&lo_rec, &hi_rec, lambda0)?;
    let mut history = vec![(lo, hi)];
    let mut iterations = 0;
    while hi - lo > tol * 1f64.max(0.5 * (lo + hi).abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let (exit, rec) = shoot(mid, lambda0, l, order, j_max)?;
        check_monotone(&lo_rec, &rec, lambda0)?;
        check_monotone(&rec, &hi_rec, lambda0)?;
        match exit {
            Exit::Above => {
                hi = mid;
                hi_rec = rec;
            }
            Exit::Below => {
                lo = mid;
                lo_rec = rec;
            }
            Exit::Bounded => {
                lo = mid;
                hi = mid;
            }
        }
        history.push((lo, hi));
    }
    let beta_c = 0.5 * (lo + hi);
    Ok(CriticalReport {
        lambda: [lambda0, 0.0],
        beta_c: [beta_c, 0.0],
        iterations,
        history,
    })
}

/// Default bisection tolerance factor.
pub const CRITICAL_TOL: f64 = 1e-14;

/// `β^c(λ₀)` for real `λ₀ ∈ [0, δ̄)` by bisection on the exit direction,
/// with the bracket history.
pub fn critical_beta_report(lambda0: f64, l: u32, j_max: usize, tol: f64, order: Order) -> Result<CriticalReport> {
    if !(lambda0 >= 0.0) || !lambda0.is_finite() {
        return Err(Error::Domain(format!("bisection needs real lambda >= 0, got {lambda0}")));
    }
    if lambda0 == 0.0 {
        return Ok(CriticalReport {
            lambda: [0.0, 0.0],
            beta_c: [0.0, 0.0],
            iterations: 0,
            history: vec![],
        });
    }
    let b = big_b::<C64>(l).re;
    let w = 8.0 * b * lambda0;
    bisect(lambda0, -w, w, w, l, order, j_max, tol)
}

/// Number of steps used by the secant residual: amplification `L^{2J} ≥ 10¹²`.
fn secant_depth(l: u32) -> usize {
    (12.0 * 10f64.ln() / (2.0 * f64::from(l).ln())).ceil() as usize
}

/// `β_J − β^c_lead(λ_J)` after `J` steps.
fn shooting_residual(beta0: C64, lambda0: C64, l: u32, order: Order, depth: usize) -> Result<C64> {
    let mut p = FlowPoint::new(0, beta0, lambda0);
    for _ in 0..depth {
        p = flow_step(&p, l, order)?;
    }
    Ok(p.beta - beta_c_leading(p.lambda, l))
}

fn secant(seed: C64, lambda0: C64, l: u32, order: Order, depth: usize, tol: f64) -> Result<C64> {
    let h = 1e-7 * (seed.norm() + lambda0.norm());
    let mut x0 = seed;
    let mut x1 = seed + C64::new(h, 0.5 * h);
    let mut f0 = shooting_residual(x0, lambda0, l, order, depth)?;
    for _ in 0..100 {
        let f1 = shooting_residual(x1, lambda0, l, order, depth)?;
        let df = f1 - f0;
        if df.norm() == 0.0 {
            return Ok(x1);
        }
        let x2 = x1 - f1 * (x1 - x0) / df;
        if !finite(x2) {
            return Err(Error::Numerical("secant iteration diverged".into()));
        }
        if (x2 - x1).norm() <= tol * x2.norm().max(1.0) {
            return Ok(x2);
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
    }
    Err(Error::Numerical(format!("secant iteration for critical beta did not converge at lambda = {lambda0}")))
}

/// Refines a guess for complex `λ` by secant iterations of growing depth.
fn secant_refine(seed: C64, lambda0: C64, l: u32, order: Order, tol: f64) -> Result<C64> {
    let full = secant_depth(l);
    let mut beta = seed;
    let mut depth = 4.min(full);
    loop {
        beta = secant(beta, lambda0, l, order, depth, tol)?;
        if depth == full {
            return Ok(beta);
        }
        depth = (depth + 4).min(full);
    }
}

/// `β^c(λ₀)` for complex `λ₀` by secant continuation in `arg λ₀` from the
/// real solution at `|λ₀|`.
pub fn critical_beta_secant(lambda0: C64, l: u32, j_max: usize, tol: f64, order: Order) -> Result<C64> {
    let r = lambda0.norm();
    if r == 0.0 {
        return Ok(c(0.0));
    }
    let start = critical_beta_report(r, l, j_max, tol, order)?;
    let mut beta = c(start.beta_c[0]);
    let phi = lambda0.arg();
    let pieces = ((phi.abs() / (PI / 32.0)).ceil() as usize).max(1);
    for k in 1..=pieces {
        let rot = C64::from_polar(1.0, phi / pieces as f64);
        let lam = C64::from_polar(r, phi * k as f64 / pieces as f64);
        beta = secant_refine(beta * rot, lam, l, order, tol)?;
    }
    Ok(beta)
}

/// `β^c(λ₀)`: bisection for real `λ₀`, secant continuation otherwise.
pub fn critical_beta(lambda0: C64, l: u32, j_max: usize, tol: f64, order: Order) -> Result<C64> {
    if lambda0.im == 0.0 && lambda0.re >= 0.0 {
        Ok(c(critical_beta_report(lambda0.re, l, j_max, tol, order)?.beta_c[0]))
    } else {
        critical_beta_secant(lambda0, l, j_max, tol, order)
    }
}

/// Re-shoots `β^c` at `λ` starting from a nearby estimate.
fn reshoot(lambda: C64, warm: C64, l: u32, order: Order, tol: f64) -> Result<C64> {
    if lambda.norm() == 0.0 {
        return Ok(c(0.0));
    }
    if lambda.im == 0.0 && lambda.re > 0.0 {
        let w = tol * warm.norm().max(1.0);
        let rep = bisect(lambda.re, warm.re - w, warm.re + w, w, l, order, SHOT_STEPS, tol)?;
        Ok(c(rep.beta_c[0]))
    } else {
        secant(warm, lambda, l, order, secant_depth(l), tol)
    }
}

/// The critical trajectory `(β^c_j, λ_j)`, `j = 0..=steps`: `λ_{j+1}` is the
/// flow image of `(β^c_j, λ_j)` and `β^c_{j+1}` is re-shot at `λ_{j+1}`.
pub fn critical_trajectory(lambda0: C64, l: u32, steps: usize, order: Order) -> Result<Vec<FlowPoint>> {
    let beta0 = critical_beta(lambda0, l, SHOT_STEPS, CRITICAL_TOL, order)?;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(FlowPoint::new(0, beta0, lambda0));
    for _ in 0..steps {
        let last = points.last().expect("nonempty");
        let next = flow_step(last, l, order)?;
        let beta = reshoot(next.lambda, next.beta, l, order, CRITICAL_TOL)?;
        points.push(FlowPoint::new(next.j, beta, next.lambda));
    }
    Ok(points)
}

/// Trajectory together with the deviation from the critical trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryReport {
    pub l: u32,
    pub points: Vec<FlowPoint>,
    /// First index outside `𝒟̄_β(ρ) × 𝒟̄_λ`; `None` if the run never left.
    pub exit_index: Option<usize>,
    pub beta_c: Vec<C64>,
    /// `β̂_j = β_j − β^c_j`.
    pub beta_hat: Vec<C64>,
    /// `L^{−2j} β̂_j`.
    pub beta_eff: Vec<C64>,
    pub in_domain: Vec<bool>,
    /// Set when a forced run overflowed.
    pub diverged: bool,
}

const DIVERGENCE: f64 = 1e150;

impl TrajectoryReport {
    pub const CSV_HEADER: &'static str = "j,beta_re,beta_im,lambda_re,lambda_im,beta_hat_re,beta_hat_im,in_domain";

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                format!(
                    "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                    p.j,
                    p.beta.re,
                    p.beta.im,
                    p.lambda.re,
                    p.lambda.im,
                    self.beta_hat[i].re,
                    self.beta_hat[i].im,
                    self.in_domain[i]
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                serde_json::json!({
                    "j": p.j,
                    "beta": [p.beta.re, p.beta.im],
                    "lambda": [p.lambda.re, p.lambda.im],
                    "beta_hat": [self.beta_hat[i].re, self.beta_hat[i].im],
                    "beta_eff": [self.beta_eff[i].re, self.beta_eff[i].im],
                    "in_domain": self.in_domain[i],
                })
            })
            .collect();
        serde_json::json!({
            "L": self.l,
            "M": self.exit_index,
            "diverged": self.diverged,
            "points": rows,
        })
    }
}

/// Iterates the flow from `(β₀, λ₀)` for up to `j_max` steps, stopping at the
/// first exit `M` unless `force` is set.
pub fn run_flow(
    beta0: C64,
    lambda0: C64,
    l: u32,
    j_max: usize,
    dp: &DomainParams,
    order: Order,
    force: bool,
) -> Result<TrajectoryReport> {
    dp.validate()?;
    let mut points = vec![FlowPoint::new(0, beta0, lambda0)];
    let mut exit_index = None;
    let mut diverged = false;
    loop {
        let last = *points.last().expect("nonempty");
        if exit_index.is_none() && !flow_in_domain(&last, dp) {
            exit_index = Some(last.j);
            if !force {
                break;
            }
        }
        if last.j >= j_max {
            break;
        }
        if last.beta.norm() > DIVERGENCE {
            diverged = true;
            break;
        }
        points.push(flow_step(&last, l, order)?);
    }
    let critical = critical_trajectory(lambda0, l, points.len() - 1, order)?;
    let lf = f64::from(l);
    let beta_c: Vec<C64> = critical.iter().map(|p| p.beta).collect();
    let beta_hat: Vec<C64> = points.iter().zip(&beta_c).map(|(p, b)| p.beta - b).collect();
    let beta_eff = beta_hat
        .iter()
        .enumerate()
        .map(|(j, b)| b * lf.powi(-2 * j as i32))
        .collect();
    let in_domain = points.iter().map(|p| flow_in_domain(p, dp)).collect();
    Ok(TrajectoryReport {
        l,
        points,
        exit_index,
        beta_c,
        beta_hat,
        beta_eff,
        in_domain,
        diverged,
    })
}

/// Tail behaviour of `λ_j` along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaFit {
    pub window_start: usize,
    pub window_end: usize,
    /// `sup |8Bjλ_j − 1|` over the window.
    pub sup_deviation: f64,
    /// `|8Bjλ_j − 1|` at the last point.
    pub final_deviation: f64,
    pub monotone_decreasing: bool,
    pub positive: bool,
}

/// Compares `λ_j` with `1/(8Bj)` over the second half of the trajectory.
pub fn lambda_asymptotics(points: &[FlowPoint], l: u32) -> Result<LambdaFit> {
    if points.len() < 3 {
        return Err(Error::Input("lambda asymptotics needs at least three points".into()));
    }
    let b = big_b::<C64>(l).re;
    let dev = |p: &FlowPoint| (p.lambda * (8.0 * b * p.j as f64) - 1.0).norm();
    let last = points.len() - 1;
    let start = (last / 2).max(1);
    let sup_deviation = points[start..].iter().map(dev).fold(0.0, f64::max);
    let real = points.iter().all(|p| p.lambda.im == 0.0);
    Ok(LambdaFit {
        window_start: points[start].j,
        window_end: points[last].j,
        sup_deviation,
        final_deviation: dev(&points[last]),
        monotone_decreasing: real && points.windows(2).all(|w| w[1].lambda.re < w[0].lambda.re),
        positive: real && points.iter().all(|p| p.lambda.re > 0.0),
    })
}

/// `λ`-linear part of the `b`-recursion on an `L = 2` block at `β = 0`.
///
/// Row `out`, column `in`; the `β` dependence is `g^{(d_in + 4 − d_out)/2}`
/// with `g = (1+β)^{−1}` and field degrees `d = (0, 2, 4)`.
#[derive(Clone, Debug)]
struct LambdaTable {
    site: [[Cq; 3]; 3],
    transition: [Cq; 3],
}

static LAMBDA_TABLE: OnceLock<std::result::Result<LambdaTable, String>> = OnceLock::new();

fn table_run(b: [Cq; 4], obs_site: usize) -> Result<[Cq; 3]> {
    let zero = Cq::zero();
    let cov = GammaCov::new(&zero, 2)?;
    let with = |lambda: Cq| {
        second_order_step(
            &Interaction::quartic(lambda).with_observable(b.clone()).with_obs_site(obs_site),
            &cov,
        )
    };
    let one = with(Cq::one())?.b_tilde;
    let free = with(Cq::zero())?.b_tilde;
    Ok([
        one[0].clone() - free[0].clone(),
        one[1].clone() - free[1].clone(),
        one[2].clone() - free[2].clone(),
    ])
}

fn build_table() -> Result<LambdaTable> {
    let z = Cq::zero;
    let o = Cq::one;
    let col1 = table_run([z(), o(), z(), z()], 0)?;
    let col2 = table_run([z(), z(), o(), z()], 0)?;
    let transition = table_run([z(), o(), z(), z()], 1)?;
    let site = [
        [z(), col1[0].clone(), col2[0].clone()],
        [z(), col1[1].clone(), col2[1].clone()],
        [z(), col1[2].clone(), col2[2].clone()],
    ];
    Ok(LambdaTable { site, transition })
}

fn lambda_table() -> Result<&'static LambdaTable> {
    LAMBDA_TABLE
        .get_or_init(|| build_table().map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| Error::Numerical(format!("block computation for the b-recursion failed: {e}")))
}

const DEGREE: [i32; 3] = [0, 2, 4];

fn g_power<C: Scalar>(g: &C, k: i32) -> Result<C> {
    if k >= 0 {
        Ok(g.pow(k as u32))
    } else {
        Err(Error::Numerical("negative power of the covariance scale".into()))
    }
}

/// One step of the observable recursion `(b₀, b₁, b₂) ↦ (b̃₀, b̃₁, b̃₂)`.
///
/// `transition` selects the step at which `φ̄` still sits off the origin
/// (`Γ(x_j)` is the off-site value). The `λ⁰` part is the closed form
/// `b̃₀ = b₀ + Γ(x_j)b₁ + Γ(0)²b₂`, `b̃₁ = L^{−2}(b₁ + 2Γ(0)b₂)`, `b̃₂ = L^{−4}b₂`;
/// the `λ`-linear part comes from the exact block computation and is
/// available for `L = 2` only.
pub fn b_step<C: Scalar>(b: &[C; 3], beta: &C, lambda: &C, l: u32, transition: bool) -> Result<[C; 3]> {
    let cov = GammaCov::new(beta, l)?;
    let g = (C::one() + beta.clone()).inv().ok_or_else(|| Error::Singular("1 + beta = 0".into()))?;
    let l2 = C::from_i64(i64::from(l * l));
    let il2 = l2.inv().expect("L > 0");
    let g_x = if transition { cov.off_site.clone() } else { cov.on_site.clone() };
    let g0 = cov.on_site.clone();
    let two = C::from_i64(2);
    let mut out = [
        b[0].clone() + g_x.mul_ref(&b[1]) + g0.pow(2).mul_ref(&b[2]),
        il2.mul_ref(&(b[1].clone() + two.mul_ref(&g0).mul_ref(&b[2]))),
        il2.pow(2).mul_ref(&b[2]),
    ];
    if lambda.is_zero() {
        return Ok(out);
    }
    if l != 2 {
        return Err(Error::Input(format!(
            "second-order b-recursion is tabulated for L = 2 only (got L = {l}); use lambda = 0"
        )));
    }
    let table = lambda_table()?;
    for (o, slot) in out.iter_mut().enumerate() {
        for i in 1..3 {
            let entry = if transition {
                if i != 1 {
                    continue;
                }
                &table.transition[o]
            } else {
                &table.site[o][i]
            };
            if entry.is_zero() {
                continue;
            }
            let k = (DEGREE[i] + 4 - DEGREE[o]) / 2;
            let term = C::from_cq(entry).mul_ref(&g_power(&g, k)?).mul_ref(lambda).mul_ref(&b[i]);
            *slot = slot.clone() + term;
        }
    }
    Ok(out)
}

/// Observable coefficients after `j` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableState {
    pub b0: C64,
    pub b1: C64,
    pub b2: C64,
    pub x: Site,
    pub j: usize,
    /// Running scale sum `a_j`.
    pub a: C64,
}

fn l_inv_pow(l: u32, e: usize) -> f64 {
    f64::from(l).powi(-(e as i32))
}

/// States `j = 0..=N` of the `b`-flow for the two-point insertion `φ₀φ̄_x`
/// along `points` (at least `N + 1` of them).
pub fn observable_history(x: &Site, points: &[FlowPoint], n_volume: u32, l: u32) -> Result<Vec<ObservableState>> {
    if x.l() != l {
        return Err(Error::Input(format!("site uses L = {} but the flow uses L = {l}", x.l())));
    }
    if !x.in_ball(n_volume) {
        return Err(Error::Domain(format!("site {x} lies outside the volume G_{n_volume}")));
    }
    let n = n_volume as usize;
    if points.len() < n + 1 {
        return Err(Error::Input(format!(
            "trajectory too short: need {} points, got {}",
            n + 1,
            points.len()
        )));
    }
    let nx = n_of(x) as usize;
    let first = nx.saturating_sub(1);
    let mut state = ObservableState {
        b0: c(0.0),
        b1: c(1.0),
        b2: c(0.0),
        x: x.clone(),
        j: 0,
        a: c(0.0),
    };
    let mut out = vec![state.clone()];
    for (j, p) in points.iter().enumerate().take(n) {
        if j < first {
            state.b1 = c(l_inv_pow(l, 2 * (j + 1)));
        } else {
            let xj = scale_down_by(x, j as u32);
            let next = b_step(&[state.b0, state.b1, state.b2], &p.beta, &p.lambda, l, !xj.is_zero())?;
            state.a += GammaCov::new(&p.beta, l)?.at(&xj) * l_inv_pow(l, 2 * j);
            state.b0 = next[0];
            state.b1 = next[1];
            state.b2 = next[2];
        }
        state.j = j + 1;
        out.push(state.clone());
    }
    Ok(out)
}

/// `∫₀^∞ T e^{−aT−λT²} dT`.
fn first_moment(a: C64, lambda: C64) -> Result<C64> {
    if lambda.norm() == 0.0 {
        if a.re <= 0.0 {
            return Err(Error::Domain(format!("single-site integral diverges at a = {a}")));
        }
        return Ok(c(1.0) / (a * a));
    }
    let h = 1e-6 * (1.0 + a.norm() + lambda.norm());
    let d = single_site_closed_form(a - h, lambda)? - single_site_closed_form(a + h, lambda)?;
    Ok(d / (2.0 * h))
}

/// Final `b₀` after integrating the last single site:
/// `b₀ + b₁E(r + β_N, λ_N) + b₂E′`, with `E(a, λ) = ∫₀^∞ e^{−aT−λT²}dT`.
pub fn final_integration(state: &ObservableState, last: &FlowPoint, l: u32) -> Result<C64> {
    let r = process_constants(l)?.rate_f64();
    let a = last.beta + r;
    let e = single_site_closed_form(a, last.lambda)?;
    let mut total = state.b0 + state.b1 * e;
    if state.b2.norm() != 0.0 {
        total += state.b2 * first_moment(a, last.lambda)?;
    }
    Ok(total)
}

/// Final observable state and the Green's-function value `b₀` after the last
/// single-site integration.
pub fn observable_flow(x: &Site, points: &[FlowPoint], n_volume: u32, l: u32) -> Result<(ObservableState, C64)> {
    let history = observable_history(x, points, n_volume, l)?;
    let state = history.last().expect("nonempty").clone();
    let value = final_integration(&state, &points[n_volume as usize], l)?;
    Ok((state, value))
}

/// Theorem-level prediction `G(β₀, x) ≈ U(β_eff, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub x: Site,
    pub n_x: u32,
    pub beta_c: C64,
    pub beta_eff: C64,
    pub lambda_nx: C64,
    pub value: C64,
    pub rel_error_budget: f64,
}

impl Prediction {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "x": self.x.to_string(),
            "N_x": self.n_x,
            "beta_eff": [self.beta_eff.re, self.beta_eff.im],
            "lambda_Nx": [self.lambda_nx.re, self.lambda_nx.im],
            "G0_value": [self.value.re, self.value.im],
            "rel_error_budget": self.rel_error_budget,
        })
    }

    pub const CSV_HEADER: &'static str =
        "x,N_x,beta_eff_re,beta_eff_im,lambda_Nx_re,lambda_Nx_im,G0_value_re,G0_value_im,rel_error_budget";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.x,
            self.n_x,
            self.beta_eff.re,
            self.beta_eff.im,
            self.lambda_nx.re,
            self.lambda_nx.im,
            self.value.re,
            self.value.im,
            self.rel_error_budget
        )
    }
}

/// `U(β_eff, x)` with `β_eff = L^{−2N(x)}(β_{N(x)} − β^c_{N(x)})` and
/// relative error budget `|λ_{N(x)}|`.
pub fn predict_green(beta0: C64, lambda0: C64, x: &Site, dp: &DomainParams, order: Order) -> Result<Prediction> {
    dp.validate()?;
    let l = x.l();
    if lambda0.norm() != 0.0 && !in_domain(c(1.0), lambda0, dp, Which::D) {
        return Err(Error::Domain(format!("lambda0 = {lambda0} lies outside D_lambda")));
    }
    let nx = n_of(x);
    let critical = critical_trajectory(lambda0, l, nx as usize, order)?;
    let beta_c = critical[0].beta;
    if !in_sector(beta0 - beta_c, dp.b_beta) {
        return Err(Error::Domain(format!(
            "beta0 - beta_c = {} lies outside D_beta",
            beta0 - beta_c
        )));
    }
    let mut p = FlowPoint::new(0, beta0, lambda0);
    for _ in 0..nx {
        p = flow_step(&p, l, order)?;
    }
    let beta_hat = p.beta - critical[nx as usize].beta;
    let beta_eff = beta_hat * f64::from(l).powi(-2 * nx as i32);
    let value = u_infinite(beta_eff, x, U_INFINITE_TOL)?;
    Ok(Prediction {
        x: x.clone(),
        n_x: nx,
        beta_c,
        beta_eff,
        lambda_nx: p.lambda,
        value,
        rel_error_budget: p.lambda.norm(),
    })
}

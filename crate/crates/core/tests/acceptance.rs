use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use hierwalk::freegreen::{b_p, u_finite, u_spectral, GammaCov};
use hierwalk::grassmann::Form;
use hierwalk::hierlattice::{ball, Site};
use hierwalk::perturbation::{lemma_q_residual, verify_appendix_c};
use hierwalk::rgflow::{
    critical_beta, critical_beta_report, critical_trajectory, flow_step_cov, in_domain, lambda_asymptotics,
    observable_flow, predict_green, run_flow, DomainParams, FlowPoint, Order, Which, CRITICAL_TOL,
};
use hierwalk::scalar::{cq, q, Cq, Scalar, C64};
use hierwalk::verify::{run_suite, Suite, SuiteReport};
use hierwalk::walkmc::{mc_end_to_end, mc_green};
use hierwalk::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn suites(list: &[Suite]) -> Result<Outcome> {
    let reports: Vec<SuiteReport> = list.iter().map(|s| run_suite(*s, 2)).collect::<Result<_>>()?;
    let mut failed = Vec::new();
    let mut checks = 0;
    for r in &reports {
        for ch in &r.checks {
            checks += 1;
            if !ch.pass {
                failed.push(format!("{}: {} (defect {:e} > {:e})", r.suite, ch.name, ch.defect, ch.tolerance));
            }
        }
    }
    Ok(Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{checks} checks")
        } else {
            failed.join("; ")
        },
    })
}

fn diagram_identities() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = Vec::new();
    for _ in 0..10 {
        let beta = cq(q(rng.random_range(1..=60), rng.random_range(1..=12)), q(rng.random_range(-30..=30), rng.random_range(1..=12)));
        let lambda = cq(q(rng.random_range(1..=20), 97), q(rng.random_range(-20..=20), 89));
        if !b_p(&beta, 1, 2)?.is_zero() {
            bad.push("B1 != 0".to_string());
        }
        let report = verify_appendix_c(&beta, &lambda, 2)?;
        bad.extend(report.checks.iter().filter(|ch| !ch.matches).map(|ch| ch.id.clone()));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: bad.is_empty() && secs < 30.0,
        detail: format!("10 exact couplings, mismatches {:?}, {secs:.1} s", bad),
    })
}

fn operator_identity() -> Result<Outcome> {
    let beta = cq(q(5, 7), q(-2, 9));
    let gamma = GammaCov::<Cq>::new(&beta, 2)?;
    let n = 16;
    let mut v = Form::<Cq>::zero(n, 1);
    for y in 0..n {
        let t = Form::tau(n, 1, y);
        v = v.plus(&t.wedge(&t)?)?;
    }
    let v = v.wedge(&Form::param(n, 1, 0))?;
    let residual = lemma_q_residual(&v, &|a, b| gamma.between(a, b))?;
    Ok(Outcome {
        pass: residual.is_zero(),
        detail: format!("symbolic coupling on the 16-site block, {} residual terms", residual.len()),
    })
}

fn free_observable_flow() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dp = DomainParams::default();
    let n = 3;
    let mut worst: f64 = 0.0;
    let sites = ball(2, n);
    for x in &sites {
        let beta0 = C64::from_polar(rng.random_range(0.01..2.0), rng.random_range(-1.5..1.5));
        let rep = run_flow(beta0, c(0.0, 0.0), 2, n as usize, &dp, Order::AppendixC, true)?;
        let (_, value) = observable_flow(x, &rep.points, n, 2)?;
        for exact in [u_finite(&beta0, x, n, 2)?, u_spectral(&beta0, x, n, 2)?] {
            worst = worst.max((value - exact).norm() / exact.norm().max(1.0));
        }
    }
    Ok(Outcome {
        pass: worst < 1e-12,
        detail: format!("{} sites against scale sum and spectral sum, max deviation {worst:e}", sites.len()),
    })
}

fn critical_trajectory_checks() -> Result<Outcome> {
    let start = Instant::now();
    let dp = DomainParams::default();
    let mut notes = Vec::new();
    let mut pass = true;
    for lambda0 in [1e-3, 1e-2] {
        let rep = critical_beta_report(lambda0, 2, 400, CRITICAL_TOL, Order::AppendixC)?;
        let short = critical_trajectory(c(lambda0, 0.0), 2, 1000, Order::AppendixC)?;
        let inside = short.iter().all(|p| in_domain(p.beta, p.lambda, &dp, Which::DbarRho));
        let long = critical_trajectory(c(lambda0, 0.0), 2, 100_000, Order::AppendixC)?;
        let fit = lambda_asymptotics(&long, 2)?;
        pass &= inside && fit.window_end == 100_000 && fit.final_deviation < 0.1;
        notes.push(format!(
            "lambda0={lambda0:e}: beta_c={:.6e}, in domain {inside}, |8Bj lambda_j - 1|={:.2e}",
            rep.beta_c[0], fit.final_deviation
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    Ok(Outcome {
        pass,
        detail: format!("{}; {secs:.1} s", notes.join("; ")),
    })
}

fn rotation_covariance() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let theta = rng.random_range(-PI..PI);
        let rot = C64::from_polar(1.0, theta);
        let beta = c(rng.random_range(-0.3..1.0), rng.random_range(-0.5..0.5));
        let lambda = c(rng.random_range(0.0..0.1), rng.random_range(-0.02..0.02));
        let cov = c(rng.random_range(0.2..1.0), rng.random_range(-0.3..0.3));
        for order in [Order::Minimal, Order::AppendixC] {
            let plain = flow_step_cov(&FlowPoint::new(0, beta, lambda), cov, 2, order)?;
            let turned = flow_step_cov(&FlowPoint::new(0, beta * rot, lambda * rot * rot), cov / rot, 2, order)?;
            let scale = plain.beta.norm() + plain.lambda.norm();
            worst = worst.max((turned.beta - plain.beta * rot).norm() / scale);
            worst = worst.max((turned.lambda - plain.lambda * rot * rot).norm() / scale);
        }
    }
    Ok(Outcome {
        pass: worst < 1e-12,
        detail: format!("50 angles, max relative deviation {worst:e}"),
    })
}

fn green_function_cross_check() -> Result<Outcome> {
    let lambda0 = 0.02;
    let order = Order::AppendixC;
    let x = Site::new(2, vec![0, 3])?;
    let bc = critical_beta(c(lambda0, 0.0), 2, 400, CRITICAL_TOL, order)?;
    let beta0 = bc + 0.1;
    let pred = predict_green(beta0, c(lambda0, 0.0), &x, &DomainParams::default(), order)?;
    let est = mc_green(beta0, lambda0, &x, 3, 1_000_000, 3)?;
    let diff = (est.value() - pred.value).norm();
    let tol = (3.0 * est.std_error).max(pred.rel_error_budget * pred.value.norm());
    let green_ok = diff <= tol;

    let a = mc_end_to_end(4.0, 0.0, 2, 10, 200_000, 15)?;
    let b = mc_end_to_end(8.0, 0.0, 2, 10, 200_000, 15)?;
    let slope = (b.ratio / 8.0) / (a.ratio / 4.0);
    let linear_ok = (slope - 1.0).abs() < 0.1;

    let free = mc_end_to_end(50.0, 0.0, 2, 8, 200_000, 16)?;
    let inter = mc_end_to_end(50.0, 0.1, 2, 8, 200_000, 16)?;
    let d: Vec<f64> = inter.batch_ratios.iter().zip(&free.batch_ratios).map(|(p, q)| p - q).collect();
    let nb = d.len() as f64;
    let mean = d.iter().sum::<f64>() / nb;
    let se = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt();
    let swell_ok = mean > 3.0 * se;

    Ok(Outcome {
        pass: green_ok && linear_ok && swell_ok,
        detail: format!(
            "x={x}, beta0={:.6}: prediction {:.6e} vs walk {:.6e} +- {:.2e} (tolerance {:.2e}); \
             free MSD/T ratio T=8 vs T=4 {slope:.4}; swelling {mean:.1} +- {se:.1}",
            beta0.re, pred.value.re, est.mean[0], est.std_error, tol
        ),
    })
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Result<Outcome>)> = vec![
        ("diagram identities", diagram_identities),
        ("operator identity", operator_identity),
        ("scale decomposition", || suites(&[Suite::Decomp])),
        ("supersymmetry suite", || suites(&[Suite::Susy, Suite::Convolution])),
        ("tau isomorphism", || suites(&[Suite::Tau])),
        ("free observable flow", free_observable_flow),
        ("critical trajectory", critical_trajectory_checks),
        ("rotation covariance", rotation_covariance),
        ("Green's function cross-check", green_function_cross_check),
        ("norm properties", || suites(&[Suite::Norms])),
    ];
    let mut all = true;
    for (k, (name, run)) in criteria.into_iter().enumerate() {
        let outcome = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        all &= outcome.pass;
        println!("{} {:>2} {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, k + 1, outcome.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

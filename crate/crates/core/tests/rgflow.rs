use std::f64::consts::PI;
use std::time::Instant;

use hierwalk::freegreen::{b_p, big_b, gamma, u_finite, u_infinite, GammaCov, U_INFINITE_TOL};
use hierwalk::hierlattice::{ball, n_of, Site};
use hierwalk::perturbation::{second_order_step, Interaction};
use hierwalk::rgflow::{
    b_step, beta_c_leading, critical_beta, critical_beta_report, critical_beta_secant, critical_trajectory,
    flow_step, flow_step_cov, in_domain, lambda_asymptotics, observable_flow, observable_history, predict_green,
    run_flow, DomainParams, FlowPoint, Order, Which, CRITICAL_TOL,
};
use hierwalk::scalar::{cq, q, Cq, Scalar, C64};
use hierwalk::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn site(digits: &[u32]) -> Site {
    Site::new(2, digits.to_vec()).unwrap()
}

#[test]
fn one_step_example() {
    let p = flow_step(&FlowPoint::new(0, c(0.0, 0.0), c(0.01, 0.0)), 2, Order::Minimal).unwrap();
    assert!((p.lambda - c(0.00925, 0.0)).norm() < 1e-16);
    assert!((p.beta - c(0.075, 0.0)).norm() < 1e-16);
    assert_eq!(p.j, 1);
}

#[test]
fn free_flow_only_rescales() {
    for order in [Order::Minimal, Order::AppendixC] {
        for l in [2, 3] {
            let beta = c(0.3, -0.7);
            let p = flow_step(&FlowPoint::new(4, beta, c(0.0, 0.0)), l, order).unwrap();
            assert_eq!(p.lambda, c(0.0, 0.0));
            assert!((p.beta - beta * f64::from(l * l)).norm() < 1e-15);
        }
    }
}

#[test]
fn pole_is_reported() {
    let err = flow_step(&FlowPoint::new(0, c(-1.0, 0.0), c(0.01, 0.0)), 2, Order::Minimal).unwrap_err();
    assert!(matches!(err, Error::Singular(_)));
}

#[test]
fn second_order_terms_match_covariance_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let beta = c(rng.random_range(-0.4..2.0), rng.random_range(-1.0..1.0));
        let lambda = c(rng.random_range(0.0..0.05), rng.random_range(-0.01..0.01));
        let l = rng.random_range(2..=4);
        let p = FlowPoint::new(0, beta, lambda);
        let min = flow_step(&p, l, Order::Minimal).unwrap();
        let full = flow_step(&p, l, Order::AppendixC).unwrap();
        let b0 = gamma(&beta, &Site::zero(l)).unwrap();
        let b2 = b_p(&beta, 2, l).unwrap();
        let b3 = b_p(&beta, 3, l).unwrap();
        let l2 = f64::from(l * l);
        let extra = -lambda * lambda * (b2 * b0 + b3) * (4.0 * l2);
        assert!((full.beta - min.beta - extra).norm() < 1e-14 * (1.0 + min.beta.norm()));
        assert_eq!(full.lambda, min.lambda);
        let b = big_b::<C64>(l).re;
        let g = c(1.0, 0.0) / (c(1.0, 0.0) + beta);
        assert!((min.lambda - (lambda - lambda * lambda * g * g * 8.0 * b)).norm() < 1e-15);
    }
}

#[test]
fn rotation_covariance_of_the_explicit_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let theta = rng.random_range(-PI / 2.0..PI / 2.0);
        let rot = C64::from_polar(1.0, theta);
        let beta = c(rng.random_range(-0.3..1.0), rng.random_range(-0.5..0.5));
        let lambda = c(rng.random_range(0.0..0.1), rng.random_range(-0.02..0.02));
        let cov = c(rng.random_range(0.2..1.0), rng.random_range(-0.3..0.3));
        for order in [Order::Minimal, Order::AppendixC] {
            let plain = flow_step_cov(&FlowPoint::new(0, beta, lambda), cov, 2, order).unwrap();
            let turned = flow_step_cov(&FlowPoint::new(0, beta * rot, lambda * rot * rot), cov / rot, 2, order).unwrap();
            let scale = plain.beta.norm() + plain.lambda.norm();
            assert!((turned.beta - plain.beta * rot).norm() < 1e-12 * scale);
            assert!((turned.lambda - plain.lambda * rot * rot).norm() < 1e-12 * scale);
        }
    }
}

#[test]
fn domain_examples() {
    let dp = DomainParams::default();
    dp.validate().unwrap();
    assert!(in_domain(c(1.0, 0.0), c(0.001, 0.0), &dp, Which::DbarRho));
    assert!(!in_domain(c(-1.0, 0.0), c(0.001, 0.0), &dp, Which::D));
    assert!(!in_domain(c(-1.0, 0.0), c(0.001, 0.0), &dp, Which::DbarRho));
    let edge = C64::from_polar(1.0, dp.b_beta + 1e-9);
    assert!(!in_domain(edge, c(0.01, 0.0), &dp, Which::D));
    assert!(in_domain(edge, c(0.01, 0.0), &dp, Which::Dbar));
    assert!(!in_domain(c(1.0, 0.0), c(0.07, 0.0), &dp, Which::D));
    assert!(in_domain(c(1.0, 0.0), c(0.07, 0.0), &dp, Which::Dbar));
    assert!(!in_domain(c(1.0, 0.0), c(0.0, 0.0), &dp, Which::Dbar));
    assert!(in_domain(c(-0.3, 0.0), c(0.01, 0.0), &dp, Which::DbarRho));
    assert!(!in_domain(c(-0.3, 0.0), c(0.01, 0.0), &dp, Which::Dbar));
    let theta = dp.h_theta();
    assert!(in_domain(C64::from_polar(5.0, theta + PI / 2.0 - 0.1), c(0.01, 0.0), &dp, Which::Hplus));
    assert!(!in_domain(C64::from_polar(5.0, -theta - PI / 2.0 + 0.1), c(0.01, 0.0), &dp, Which::Hplus));
    assert!(in_domain(C64::from_polar(5.0, -theta - PI / 2.0 + 0.1), c(0.01, 0.0), &dp, Which::Hminus));
    let bad = DomainParams { b_beta: 0.9 * PI, ..dp };
    assert!(bad.validate().is_err());
}

#[test]
fn free_run_and_first_exit() {
    let dp = DomainParams::default();
    let rep = run_flow(c(0.01, 0.02), c(0.0, 0.0), 2, 12, &dp, Order::Minimal, false).unwrap();
    for (j, p) in rep.points.iter().enumerate() {
        assert!((p.beta - c(0.01, 0.02) * 4f64.powi(j as i32)).norm() < 1e-12 * p.beta.norm());
        assert_eq!(rep.beta_hat[j], p.beta);
    }
    assert_eq!(rep.exit_index, None);
    assert_eq!(rep.points.len(), 13);
    let rep = run_flow(c(-0.2, 0.0), c(0.0, 0.0), 2, 12, &dp, Order::Minimal, false).unwrap();
    assert_eq!(rep.exit_index, Some(1));
    assert_eq!(rep.points.len(), 2);
    let forced = run_flow(c(-0.2, 0.0), c(0.0, 0.0), 2, 12, &dp, Order::Minimal, true).unwrap();
    assert_eq!(forced.exit_index, Some(1));
    assert_eq!(forced.points.len(), 13);
    assert_eq!(forced.csv_rows().len(), 13);
}

#[test]
fn critical_beta_is_small_and_negative() {
    for order in [Order::Minimal, Order::AppendixC] {
        assert_eq!(critical_beta(c(0.0, 0.0), 2, 400, CRITICAL_TOL, order).unwrap(), c(0.0, 0.0));
        let mut last = 0.0f64;
        for lambda in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            let bc = critical_beta_report(lambda, 2, 400, CRITICAL_TOL, order).unwrap().beta_c[0];
            assert!(bc < 0.0);
            assert!(bc < last);
            last = bc;
            let lead = beta_c_leading(c(lambda, 0.0), 2).re;
            assert!((bc / lead - 1.0).abs() < 20.0 * lambda, "lambda={lambda}: {bc} vs {lead}");
        }
    }
}

#[test]
fn critical_beta_separates_the_exits() {
    let dp = DomainParams::default();
    for lambda in [1e-3, 1e-2] {
        let rep = critical_beta_report(lambda, 2, 400, CRITICAL_TOL, Order::Minimal).unwrap();
        let bc = rep.beta_c[0];
        assert!(rep.history.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 <= w[0].1));
        let step = 10.0 * CRITICAL_TOL;
        let up = run_flow(c(bc + step, 0.0), c(lambda, 0.0), 2, 200, &dp, Order::Minimal, true).unwrap();
        let down = run_flow(c(bc - step, 0.0), c(lambda, 0.0), 2, 200, &dp, Order::Minimal, true).unwrap();
        let up_end = up.points.last().unwrap().beta.re;
        assert!(up_end > 1.0 || up.diverged);
        assert!(down.exit_index.is_some());
        assert!(down.points.iter().any(|p| p.beta.re < -0.5));
    }
}

#[test]
fn secant_continuation_agrees_with_bisection() {
    for lambda in [1e-3, 2e-2] {
        let bis = critical_beta_report(lambda, 2, 400, CRITICAL_TOL, Order::AppendixC).unwrap().beta_c[0];
        let sec = critical_beta_secant(c(lambda, 0.0), 2, 400, CRITICAL_TOL, Order::AppendixC).unwrap();
        assert!((sec - c(bis, 0.0)).norm() < 1e-9 * bis.abs(), "{sec} vs {bis}");
    }
}

#[test]
fn complex_coupling_has_a_bounded_critical_trajectory() {
    let lambda0 = C64::from_polar(0.01, 0.3);
    let dp = DomainParams::default();
    let traj = critical_trajectory(lambda0, 2, 300, Order::AppendixC).unwrap();
    for p in &traj {
        assert!(in_domain(p.beta, p.lambda, &dp, Which::DbarRho), "left the domain at {}", p.j);
    }
    let bc = traj[0].beta;
    let lead = beta_c_leading(lambda0, 2);
    assert!((bc - lead).norm() < 0.2 * lead.norm());
    let conj = critical_beta(lambda0.conj(), 2, 400, CRITICAL_TOL, Order::AppendixC).unwrap();
    assert!((conj - bc.conj()).norm() < 1e-10 * bc.norm());
}

#[test]
fn critical_trajectory_stays_in_the_domain() {
    let dp = DomainParams::default();
    for lambda0 in [1e-3, 1e-2] {
        let traj = critical_trajectory(c(lambda0, 0.0), 2, 1000, Order::AppendixC).unwrap();
        assert_eq!(traj.len(), 1001);
        for p in &traj {
            assert!(in_domain(p.beta, p.lambda, &dp, Which::DbarRho));
        }
        let fit = lambda_asymptotics(&traj, 2).unwrap();
        assert!(fit.monotone_decreasing && fit.positive);
    }
}

#[test]
fn running_coupling_tail_law() {
    let start = Instant::now();
    let traj = critical_trajectory(c(1e-2, 0.0), 2, 100_000, Order::AppendixC).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let fit = lambda_asymptotics(&traj, 2).unwrap();
    assert_eq!(fit.window_end, 100_000);
    assert!(fit.final_deviation < 0.1, "{fit:?}");
    assert!(fit.monotone_decreasing && fit.positive);
    assert!(elapsed < 10.0, "took {elapsed} s");
}

#[test]
fn deviation_grows_by_l_squared() {
    let dp = DomainParams::default();
    let lambda0 = c(1e-3, 0.0);
    let bc = critical_beta(lambda0, 2, 400, CRITICAL_TOL, Order::AppendixC).unwrap();
    let rep = run_flow(bc + 1e-7, lambda0, 2, 60, &dp, Order::AppendixC, false).unwrap();
    let mut checked = 0;
    for j in 0..rep.points.len() - 1 {
        let (h0, h1) = (rep.beta_hat[j], rep.beta_hat[j + 1]);
        if h0.norm() > 1e3 * rep.points[j].lambda.norm() && rep.in_domain[j + 1] {
            assert!(((h1 / h0).re / 4.0 - 1.0).abs() < 0.01, "j={j}: ratio {}", h1 / h0);
            checked += 1;
        }
    }
    assert!(checked >= 1);
    let rep = run_flow(bc + 0.1, lambda0, 2, 20, &dp, Order::AppendixC, false).unwrap();
    for w in rep.beta_hat.windows(2) {
        assert!(((w[1] / w[0]).re / 4.0 - 1.0).abs() < 0.05);
    }
    assert_eq!(rep.exit_index, None);
    let rep = run_flow(bc - 0.1, lambda0, 2, 20, &dp, Order::AppendixC, false).unwrap();
    assert_eq!(rep.exit_index, Some(2));
}

fn random_sector_beta(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(rng.random_range(0.01..2.0), rng.random_range(-1.5..1.5))
}

#[test]
fn free_observable_flow_reproduces_the_dirichlet_potential() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 3;
    for x in ball(2, n) {
        let beta0 = random_sector_beta(&mut rng);
        let points: Vec<FlowPoint> = (0..=n as usize)
            .map(|j| FlowPoint::new(j, beta0 * 4f64.powi(j as i32), c(0.0, 0.0)))
            .collect();
        let (_, value) = observable_flow(&x, &points, n, 2).unwrap();
        let exact = u_finite(&beta0, &x, n, 2).unwrap();
        assert!((value - exact).norm() < 1e-12 * exact.norm().max(1.0), "x={x}");
    }
}

#[test]
fn observable_scales_before_the_transition() {
    let x = site(&[0, 0, 0, 5]);
    let points: Vec<FlowPoint> = (0..=5).map(|j| FlowPoint::new(j, c(0.1, 0.0), c(0.01, 0.0))).collect();
    let hist = observable_history(&x, &points, 5, 2).unwrap();
    for (j, s) in hist.iter().enumerate().take(n_of(&x) as usize) {
        assert_eq!(s.b1, c(4f64.powi(-(j as i32)), 0.0));
        assert_eq!(s.b0, c(0.0, 0.0));
        assert_eq!(s.b2, c(0.0, 0.0));
        assert_eq!(s.a, c(0.0, 0.0));
    }
    assert!(observable_history(&x, &points[..4], 5, 2).is_err());
}

fn rand_cq(rng: &mut ChaCha8Rng) -> Cq {
    cq(q(rng.random_range(1..=20), rng.random_range(1..=9)), q(rng.random_range(-9..=9), rng.random_range(1..=9)))
}

#[test]
fn tabulated_b_recursion_matches_the_block_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..4 {
        let beta = rand_cq(&mut rng);
        let lambda = cq(q(rng.random_range(1..=5), 97), q(rng.random_range(-3..=3), 101));
        let b = [rand_cq(&mut rng), rand_cq(&mut rng), rand_cq(&mut rng)];
        let transition = k % 2 == 1;
        let input = if transition { [b[0].clone(), b[1].clone(), Cq::zero()] } else { b.clone() };
        let v = Interaction::quartic(lambda.clone())
            .with_observable([input[0].clone(), input[1].clone(), input[2].clone(), Cq::zero()])
            .with_obs_site(usize::from(transition));
        let direct = second_order_step(&v, &GammaCov::new(&beta, 2).unwrap()).unwrap().b_tilde;
        let table = b_step(&input, &beta, &lambda, 2, transition).unwrap();
        assert_eq!(direct, table);
    }
}

#[test]
fn b_recursion_needs_the_table_for_interacting_steps() {
    let one = C64::new(1.0, 0.0);
    assert!(b_step(&[one, one, one], &c(0.1, 0.0), &c(0.01, 0.0), 3, false).is_err());
    let free = b_step(&[one, one, one], &c(0.1, 0.0), &c(0.0, 0.0), 3, false).unwrap();
    let g0 = GammaCov::new(&c(0.1, 0.0), 3).unwrap().on_site;
    assert!((free[0] - (one + g0 + g0 * g0)).norm() < 1e-15);
    assert!((free[2] - one / 81.0).norm() < 1e-16);
}

#[test]
fn accumulated_scale_sum_is_close_to_the_free_value() {
    let x = site(&[3, 7]);
    let n = 3;
    let beta0 = c(0.2, 0.1);
    let free: Vec<FlowPoint> = (0..=n).map(|j| FlowPoint::new(j, beta0 * 4f64.powi(j as i32), c(0.0, 0.0))).collect();
    let (state0, _) = observable_flow(&x, &free, n as u32, 2).unwrap();
    let top = c(1.0, 0.0) / (c(20.0 / 21.0, 0.0) + beta0 * 64.0) / 64.0;
    let exact = u_finite(&beta0, &x, n as u32, 2).unwrap();
    assert!((state0.a + top - exact).norm() < 1e-14);
    assert!((state0.a - state0.b0).norm() < 1e-15);
    let shift = |lambda: f64| {
        let mut p = FlowPoint::new(0, beta0, c(lambda, 0.0));
        let mut pts = vec![p];
        for _ in 0..n {
            p = flow_step(&p, 2, Order::AppendixC).unwrap();
            pts.push(p);
        }
        (observable_flow(&x, &pts, n as u32, 2).unwrap().0.a - state0.a).norm()
    };
    let (d1, d2) = (shift(1e-3), shift(5e-4));
    assert!(d1 < 0.05 * state0.a.norm());
    assert!((d1 / d2 - 2.0).abs() < 0.1, "{d1} {d2}");
}

#[test]
fn prediction_without_interaction_is_the_free_potential() {
    let dp = DomainParams::default();
    for x in [Site::zero(2), site(&[4]), site(&[1, 9])] {
        let beta0 = c(0.3, 0.2);
        let pred = predict_green(beta0, c(0.0, 0.0), &x, &dp, Order::Minimal).unwrap();
        let exact = u_infinite(beta0, &x, U_INFINITE_TOL).unwrap();
        assert!((pred.value - exact).norm() < 1e-13 * exact.norm());
        assert_eq!(pred.rel_error_budget, 0.0);
        assert_eq!(pred.n_x, n_of(&x));
    }
}

#[test]
fn prediction_with_interaction() {
    let dp = DomainParams::default();
    let lambda0 = c(1e-2, 0.0);
    let bc = critical_beta(lambda0, 2, 400, CRITICAL_TOL, Order::AppendixC).unwrap();
    let x = site(&[0, 3]);
    let pred = predict_green(bc + 0.1, lambda0, &x, &dp, Order::AppendixC).unwrap();
    assert!(pred.value.norm() > 0.0 && pred.value.re.is_finite());
    assert_eq!(pred.n_x, 2);
    assert!((pred.rel_error_budget - pred.lambda_nx.norm()).abs() == 0.0);
    assert!(pred.rel_error_budget < 1e-2);
    let json = pred.to_json();
    for key in ["x", "N_x", "beta_eff", "lambda_Nx", "G0_value", "rel_error_budget"] {
        assert!(json.get(key).is_some());
    }
    let zero = predict_green(bc + 0.1, lambda0, &Site::zero(2), &dp, Order::AppendixC).unwrap();
    assert_eq!(zero.n_x, 0);
    assert!((zero.beta_eff - c(0.1, 0.0)).norm() < 1e-12);
    assert!(matches!(
        predict_green(bc - 0.1, lambda0, &x, &dp, Order::AppendixC),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        predict_green(c(0.5, 0.0), c(0.2, 0.0), &x, &dp, Order::AppendixC),
        Err(Error::Domain(_))
    ));
}

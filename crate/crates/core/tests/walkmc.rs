use hierwalk::freegreen::u_finite;
use hierwalk::hierlattice::{process_constants, sample_jump_level, Site};
use hierwalk::scalar::C64;
use hierwalk::walkmc::{
    default_t_cap, free_msd_exact, green_csv_row, mc_end_to_end, mc_green, mc_green_sites, sample_path, sample_rng,
    single_site_closed_form, GREEN_CSV_HEADER,
};
use hierwalk::Error;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn site(digits: &[u32]) -> Site {
    Site::new(2, digits.to_vec()).unwrap()
}

#[test]
fn single_site_integral_examples() {
    let one = single_site_closed_form(c(1.0, 0.0), c(1e-12, 0.0)).unwrap();
    assert!((one - c(1.0, 0.0)).norm() < 1e-9);
    let gauss = single_site_closed_form(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
    assert!((gauss.re - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    let mut last = f64::INFINITY;
    for lambda in [0.01, 0.1, 0.3, 1.0, 3.0] {
        let v = single_site_closed_form(c(0.7, 0.0), c(lambda, 0.0)).unwrap().re;
        assert!(v < last);
        last = v;
    }
    assert!(single_site_closed_form(c(-1.0, 0.0), c(0.0, 0.0)).is_err());
}

#[test]
fn single_site_integral_matches_the_error_function() {
    for (beta, lambda) in [(1.0, 0.3), (0.2, 0.05), (-0.5, 0.4), (3.0, 2.0)] {
        let got = single_site_closed_form(c(beta, 0.0), c(lambda, 0.0)).unwrap().re;
        let s = lambda.sqrt();
        let z = beta / (2.0 * s);
        let exact = (std::f64::consts::PI / (4.0 * lambda)).sqrt() * (z * z).exp() * erfc(z);
        assert!((got - exact).abs() < 1e-9 * exact, "beta={beta} lambda={lambda}: {got} vs {exact}");
    }
}

#[test]
fn holding_times_have_mean_one_over_r() {
    let params = process_constants(2).unwrap();
    let mut holds = Vec::new();
    let mut i = 0;
    while holds.len() < 1_000_000 {
        let path = sample_path(3, &params, &mut sample_rng(17, i), f64::INFINITY).unwrap();
        assert!(path.alive_until.is_finite());
        assert!(path.sites.windows(2).all(|w| w[0] != w[1]));
        holds.extend_from_slice(&path.hold_times);
        i += 1;
    }
    let mean = holds.iter().sum::<f64>() / holds.len() as f64;
    assert!((mean / (21.0 / 20.0) - 1.0).abs() < 0.01, "mean hold {mean}");
}

#[test]
fn local_times_add_up_to_the_exit_time() {
    let params = process_constants(2).unwrap();
    for i in 0..500 {
        let path = sample_path(2, &params, &mut sample_rng(4, i), 50.0).unwrap();
        let lt = path.local_times();
        let end = if path.alive_until.is_finite() { path.alive_until } else { 50.0 };
        assert!((lt.total() - end).abs() < 1e-9 * end.max(1.0));
        assert!((path.duration() - end).abs() < 1e-9 * end.max(1.0));
        assert!(lt.iter().all(|(_, t)| t >= 0.0));
        let squares: f64 = lt.iter().map(|(_, t)| t * t).sum();
        assert!((lt.sum_of_squares() - squares).abs() < 1e-9 * squares.max(1.0));
        if let Some(first) = path.sites.first() {
            assert_eq!(path.position(0.0), Some(first));
        }
    }
}

#[test]
fn occupation_of_the_first_block_is_uniform() {
    let params = process_constants(2).unwrap();
    let mut occ = [0.0f64; 16];
    for i in 0..40_000 {
        let path = sample_path(1, &params, &mut sample_rng(8, i), f64::INFINITY).unwrap();
        for (s, h) in path.sites.iter().zip(&path.hold_times) {
            occ[s.to_index() as usize] += h;
        }
    }
    let others = &occ[1..];
    let mean = others.iter().sum::<f64>() / 15.0;
    for v in others {
        assert!((v / mean - 1.0).abs() < 0.05, "{v} vs {mean}");
    }
    assert!(occ[0] > mean);
}

#[test]
fn jump_levels_pass_a_chi_square_test() {
    let params = process_constants(2).unwrap();
    let mut rng = sample_rng(99, 0);
    let kmax = 6;
    let mut counts = vec![0u64; kmax + 1];
    let draws = 200_000;
    for _ in 0..draws {
        let k = sample_jump_level(&mut rng, &params).unwrap() as usize;
        counts[k.min(kmax + 1) - 1] += 1;
    }
    let rho: f64 = 0.25;
    let mut stat = 0.0;
    for (i, &obs) in counts.iter().enumerate() {
        let p = if i < kmax { rho.powi(i as i32) * (1.0 - rho) } else { rho.powi(kmax as i32) };
        let expect = p * draws as f64;
        stat += (obs as f64 - expect).powi(2) / expect;
    }
    let pval = 1.0 - ChiSquared::new(kmax as f64).unwrap().cdf(stat);
    assert!(pval > 1e-3, "chi-square {stat}, p = {pval}");
}

#[test]
fn free_green_function_matches_the_exact_potential() {
    let xs = [Site::zero(2), site(&[5]), site(&[0, 3])];
    for beta in [c(0.1, 0.0), c(0.5, 0.0), c(1.0, 0.5)] {
        let est = mc_green_sites(beta, 0.0, &xs, 3, 1_000_000, 31, default_t_cap(beta)).unwrap();
        for (x, e) in xs.iter().zip(&est) {
            let exact = u_finite(&beta, x, 3, 2).unwrap();
            let z = (e.value() - exact).norm() / e.std_error;
            assert!(z < 3.0, "beta={beta} x={x}: {:?} vs {exact} (z = {z})", e.mean);
            assert!(e.batches >= 30);
        }
        if beta.im == 0.0 {
            assert!(est[0].mean[0] > est[1].mean[0] && est[1].mean[0] > est[2].mean[0]);
            let exact: Vec<f64> = xs.iter().map(|x| u_finite(&beta, x, 3, 2).unwrap().re).collect();
            assert!(exact[0] >= exact[1] && exact[0] >= exact[2]);
        }
    }
}

#[test]
fn interacting_single_site_matches_quadrature() {
    let r = process_constants(2).unwrap().rate_f64();
    for (beta, lambda) in [(0.3, 0.5), (0.05, 0.02)] {
        let est = mc_green(c(beta, 0.0), lambda, &Site::zero(2), 0, 200_000, 2).unwrap();
        let exact = single_site_closed_form(c(beta + r, 0.0), c(lambda, 0.0)).unwrap();
        let z = (est.value() - exact).norm() / est.std_error;
        assert!(z < 3.0, "{:?} vs {exact}", est.mean);
    }
}

#[test]
fn repulsion_lowers_the_green_function() {
    let x = site(&[2]);
    let free = mc_green(c(0.2, 0.0), 0.0, &x, 2, 100_000, 6).unwrap();
    let inter = mc_green(c(0.2, 0.0), 0.05, &x, 2, 100_000, 6).unwrap();
    assert!(inter.mean[0] < free.mean[0]);
    assert!(inter.mean[0] > 0.0);
}

#[test]
fn estimates_are_reproducible_across_thread_counts() {
    let x = site(&[1, 1]);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_green(c(0.3, 0.1), 0.01, &x, 3, 20_000, 12).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, run(1));
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std_error, b.std_error);
    let other = mc_green(c(0.3, 0.1), 0.01, &x, 3, 20_000, 13).unwrap();
    assert_ne!(a.mean, other.mean);
}

#[test]
fn invalid_inputs_are_rejected() {
    let x = site(&[1]);
    assert!(matches!(mc_green(c(0.1, 0.0), -0.1, &x, 2, 1000, 1), Err(Error::Domain(_))));
    assert!(matches!(mc_green(c(0.1, 0.0), 0.0, &site(&[0, 0, 1]), 2, 1000, 1), Err(Error::Domain(_))));
    assert!(matches!(mc_green(c(0.1, 0.0), 0.0, &x, 2, 10, 1), Err(Error::Input(_))));
    assert!(matches!(mc_green(c(-0.1, 0.0), 0.0, &x, 2, 1000, 1), Err(Error::Domain(_))));
}

#[test]
fn csv_row_has_every_column() {
    let x = site(&[1]);
    let est = mc_green(c(0.5, 0.0), 0.0, &x, 1, 300, 1).unwrap();
    let row = green_csv_row(c(0.5, 0.0), 0.0, &x, 1, &est);
    assert_eq!(row.split(',').count(), GREEN_CSV_HEADER.split(',').count());
}

#[test]
fn free_mean_square_displacement_matches_the_level_chain() {
    for t in [4.0, 16.0] {
        let e = mc_end_to_end(t, 0.0, 2, 6, 200_000, 14).unwrap();
        let (msd, alive) = free_msd_exact(t, 2, 6).unwrap();
        let z = (e.ratio - msd / alive) / e.ratio_std_error;
        assert!(z.abs() < 3.0, "T={t}: {} vs {}", e.ratio, msd / alive);
        assert!((e.denominator.mean[0] - alive).abs() < 3.0 * e.denominator.std_error.max(1e-6));
    }
}

#[test]
fn free_mean_square_displacement_is_nearly_linear_on_a_short_window() {
    let a = mc_end_to_end(4.0, 0.0, 2, 10, 200_000, 15).unwrap();
    let b = mc_end_to_end(8.0, 0.0, 2, 10, 200_000, 15).unwrap();
    let slope_ratio = (b.ratio / 8.0) / (a.ratio / 4.0);
    assert!((slope_ratio - 1.0).abs() < 0.1, "ratio/T changed by {slope_ratio}");
    let (m4, s4) = free_msd_exact(4.0, 2, 10).unwrap();
    let (m8, s8) = free_msd_exact(8.0, 2, 10).unwrap();
    assert!(((m8 / s8 / 8.0) / (m4 / s4 / 4.0) - 1.0).abs() < 0.1);
}

#[test]
fn repulsion_swells_the_walk() {
    let free = mc_end_to_end(50.0, 0.0, 2, 8, 200_000, 16).unwrap();
    let inter = mc_end_to_end(50.0, 0.1, 2, 8, 200_000, 16).unwrap();
    let diffs: Vec<f64> = inter.batch_ratios.iter().zip(&free.batch_ratios).map(|(a, b)| a - b).collect();
    let nb = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / nb;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt();
    assert!(mean / (sd / nb.sqrt()) > 3.0, "swelling {mean} ± {}", sd / nb.sqrt());
    assert!(inter.ratio > free.ratio);
    assert!(inter.denominator.mean[0] > 0.0 && inter.denominator.mean[0] <= 1.0);
    assert!(free.denominator.mean[0] <= 1.0);
}

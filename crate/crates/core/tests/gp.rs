mod common;

use common::{normals, random_points, rng};
use gpx_core::data::Regressors;
use gpx_core::gp::{
    bootstrap_se, covariance_h, fit_gp, log_likelihood_gradient, log_marginal_likelihood,
    posterior, predictive, FitStatus, GpParams, GpProblem, OptimizerSettings,
};
use gpx_core::simulate::simulate_panel;
use nalgebra::{DMatrix, DVector};

fn brute_h(x: &[Regressors], p: &GpParams) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = x[i]
            .iter()
            .zip(&x[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let k = p.sigma_f.powi(2) * (-d / p.sigma_l).exp();
        if i == j {
            k + p.sigma.powi(2)
        } else {
            k
        }
    })
}

/// Points packed closely enough that neighbours are strongly correlated.
fn clustered_points(seed: u64, n: usize) -> Vec<Regressors> {
    let mut x = random_points(&mut rng(seed), n);
    x.iter_mut().flatten().for_each(|v| *v *= 0.3);
    x
}

fn draw(x: &[Regressors], p: &GpParams, seed: u64) -> Vec<f64> {
    let l = brute_h(x, p).cholesky().unwrap().l();
    let z = DVector::from_vec(normals(&mut rng(seed), x.len()));
    (l * z).iter().copied().collect()
}

fn direct_loglik(r: &[f64], x: &[Regressors], p: &GpParams) -> f64 {
    let h = brute_h(x, p);
    let rv = DVector::from_column_slice(r);
    let quad = rv.dot(&h.clone().try_inverse().unwrap().mul(&rv));
    let n = r.len() as f64;
    -0.5 * quad - 0.5 * h.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

use std::ops::Mul;

#[test]
fn covariance_matches_brute_force() {
    let x = random_points(&mut rng(1), 25);
    let p = GpParams::new(0.2, 1.3, 2.5).unwrap();
    let h = covariance_h(&x, &p).unwrap();
    let b = brute_h(&x, &p);
    for i in 0..25 {
        for j in 0..25 {
            assert!((h[(i, j)] - b[(i, j)]).abs() < 1e-14);
            assert_eq!(h[(i, j)], h[(j, i)]);
        }
    }
}

#[test]
fn likelihood_matches_dense_formula() {
    let mut r = rng(2);
    for trial in 0..10 {
        let x = random_points(&mut r, 30);
        let p = GpParams::new(0.1 + 0.05 * trial as f64, 0.8, 1.0 + trial as f64).unwrap();
        let res = draw(&x, &p, trial);
        let got = log_marginal_likelihood(&res, &x, &p).unwrap();
        let want = direct_loglik(&res, &x, &p);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn unit_noise_at_zero_residuals() {
    let x = random_points(&mut rng(3), 40);
    let p = GpParams::new(1.0, 0.0, 1.0).unwrap();
    let ll = log_marginal_likelihood(&[0.0; 40], &x, &p).unwrap();
    let want = -20.0 * (2.0 * std::f64::consts::PI).ln();
    assert!((ll - want).abs() < 1e-12);
}

#[test]
fn zero_signal_scale_is_iid_gaussian() {
    let mut r = rng(4);
    let x = random_points(&mut r, 60);
    let res: Vec<f64> = normals(&mut r, 60).iter().map(|z| 0.03 * z).collect();
    let sigma = 0.027;
    let p = GpParams::new(sigma, 0.0, 1.7).unwrap();
    let ll = log_marginal_likelihood(&res, &x, &p).unwrap();
    let iid: f64 = res
        .iter()
        .map(|e| {
            -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - e * e / (2.0 * sigma * sigma)
        })
        .sum();
    assert!((ll - iid).abs() < 1e-8, "{ll} vs {iid}");
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let x = random_points(&mut rng(5), 40);
    let truth = GpParams::new(0.3, 1.0, 2.0).unwrap();
    let res = draw(&x, &truth, 5);
    let problem = GpProblem::new(&res, &x).unwrap();
    for p in [
        truth,
        GpParams::new(0.5, 0.6, 4.0).unwrap(),
        GpParams::new(0.1, 2.0, 0.7).unwrap(),
    ] {
        let e = problem.evaluate(&p, true, true).unwrap();
        let g = e.gradient.unwrap();
        let theta = p.to_theta();
        let h = 1e-5;
        for k in 0..3 {
            let shifted = |s: f64| {
                let mut t = theta;
                t[k] += s;
                GpParams::from_theta(&t)
            };
            let up = problem.evaluate(&shifted(h), true, false).unwrap();
            let dn = problem.evaluate(&shifted(-h), true, false).unwrap();
            let fd = (up.log_likelihood - dn.log_likelihood) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-5 * fd.abs().max(1.0), "d{k}: {} vs {fd}", g[k]);
            let (gu, gd) = (up.gradient.unwrap(), dn.gradient.unwrap());
            let observed = e.observed.unwrap();
            for j in 0..3 {
                let fd2 = -(gu[j] - gd[j]) / (2.0 * h);
                assert!(
                    (observed[j][k] - fd2).abs() < 1e-4 * fd2.abs().max(1.0),
                    "hessian ({j},{k}): {} vs {fd2}",
                    observed[j][k]
                );
            }
        }
        assert_eq!(
            log_likelihood_gradient(&res, &x, &p).unwrap(),
            g,
            "free function and problem agree"
        );
        let fisher = e.fisher.unwrap();
        for j in 0..3 {
            assert!(fisher[j][j] > 0.0);
            for k in 0..3 {
                assert!((fisher[j][k] - fisher[k][j]).abs() < 1e-9 * fisher[j][j].abs().max(1.0));
            }
        }
    }
}

#[test]
fn fisher_is_the_average_observed_information() {
    // E[-Hessian] over residual draws at the true point equals the Fisher matrix
    let x = random_points(&mut rng(6), 25);
    let p = GpParams::new(0.4, 1.0, 2.0).unwrap();
    let mut mean = [[0.0; 3]; 3];
    let draws = 400;
    let mut fisher = [[0.0; 3]; 3];
    for s in 0..draws {
        let res = draw(&x, &p, 1000 + s);
        let e = GpProblem::new(&res, &x).unwrap().evaluate(&p, true, true).unwrap();
        fisher = e.fisher.unwrap();
        let o = e.observed.unwrap();
        for j in 0..3 {
            for k in 0..3 {
                mean[j][k] += o[j][k] / draws as f64;
            }
        }
    }
    for j in 0..3 {
        let tol = 0.15 * fisher[j][j];
        for k in 0..3 {
            assert!(
                (mean[j][k] - fisher[j][k]).abs() < tol,
                "({j},{k}): {} vs {}",
                mean[j][k],
                fisher[j][k]
            );
        }
    }
}

#[test]
fn fit_recovers_generating_parameters_roughly() {
    let x = clustered_points(7, 300);
    let truth = GpParams::new(0.3, 1.0, 2.0).unwrap();
    let res = draw(&x, &truth, 7);
    let fit = fit_gp(&res, &x, &OptimizerSettings::default()).unwrap();
    assert_eq!(fit.status, FitStatus::Converged);
    let p = fit.params;
    assert!((p.sigma / truth.sigma - 1.0).abs() < 0.5, "{p:?}");
    assert!((p.sigma_f / truth.sigma_f - 1.0).abs() < 0.5, "{p:?}");
    assert!((p.sigma_l / truth.sigma_l - 1.0).abs() < 0.75, "{p:?}");
    let at_truth = log_marginal_likelihood(&res, &x, &truth).unwrap();
    assert!(fit.log_likelihood >= at_truth);
    assert!(fit.gradient.iter().all(|g| g.abs() < 1e-3));
}

#[test]
fn newton_and_steepest_ascent_agree() {
    let x = clustered_points(8, 120);
    let res = draw(&x, &GpParams::new(0.3, 1.0, 2.0).unwrap(), 8);
    let a = fit_gp(&res, &x, &OptimizerSettings::default()).unwrap();
    let b = fit_gp(&res, &x, &OptimizerSettings::steepest()).unwrap();
    assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-4);
    assert!(a.iterations <= b.iterations);
}

#[test]
fn posterior_shrinks_prior_and_matches_conditioning() {
    let mut r = rng(9);
    let x = random_points(&mut r, 30);
    let xs = random_points(&mut r, 5);
    let p = GpParams::new(0.2, 1.0, 2.0).unwrap();
    let res = draw(&x, &p, 9);
    let post = posterior(&res, &x, &xs, &p).unwrap();

    let h = brute_h(&x, &p);
    let h_inv = h.try_inverse().unwrap();
    let mut all = x.clone();
    all.extend_from_slice(&xs);
    let k = brute_h(&all, &GpParams { sigma: 0.0, ..p });
    let ks = k.view((30, 0), (5, 30)).into_owned();
    let kss = k.view((30, 30), (5, 5)).into_owned();
    let mean = &ks * &h_inv * DVector::from_column_slice(&res);
    let cov = kss - &ks * &h_inv * ks.transpose();
    for i in 0..5 {
        assert!((post.mean[i] - mean[i]).abs() < 1e-10);
        for j in 0..5 {
            assert!((post.covariance[(i, j)] - cov[(i, j)]).abs() < 1e-10);
        }
        assert!(post.variance(i) <= p.sigma_f.powi(2) + 1e-10);
        assert!(post.variance(i) >= -1e-12);
    }
}

#[test]
fn posterior_interpolates_and_reverts() {
    let x = random_points(&mut rng(10), 15);
    let p = GpParams::new(1e-8, 1.0, 2.0).unwrap();
    let res: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
    let mut far = [0.0; 9];
    far[0] = 1e4;
    let post = posterior(&res, &x, &[x[3], far], &p).unwrap();
    assert!((post.mean[0] - res[3]).abs() < 1e-6);
    assert!(post.variance(0).abs() < 1e-6);
    assert!(post.mean[1].abs() < 1e-12);
    assert!((post.variance(1) - 1.0).abs() < 1e-12);
}

#[test]
fn bootstrap_is_deterministic_per_seed() {
    let x = random_points(&mut rng(11), 60);
    let p = GpParams::new(0.3, 1.0, 2.0).unwrap();
    let opts = OptimizerSettings::default();
    let a = bootstrap_se(&x, &p, 6, 42, &opts).unwrap();
    let b = bootstrap_se(&x, &p, 6, 42, &opts).unwrap();
    let c = bootstrap_se(&x, &p, 6, 43, &opts).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.standard_errors, c.standard_errors);
    assert_eq!(a.estimates.len() + a.failed, 6);
    assert!(bootstrap_se(&x, &p, 1, 42, &opts).is_err());
}

#[test]
fn noise_only_bootstrap_piles_signal_scale_near_zero() {
    let x = random_points(&mut rng(12), 120);
    let truth = GpParams::new(0.5, 1e-3, 2.0).unwrap();
    let boot = bootstrap_se(&x, &truth, 30, 1, &OptimizerSettings::default()).unwrap();
    let mut sf: Vec<f64> = boot.estimates.iter().map(|p| p.sigma_f).collect();
    sf.sort_by(f64::total_cmp);
    let median = sf[sf.len() / 2];
    assert!(median < 0.2 * truth.sigma, "median sigma_f {median}");
    assert!(boot.standard_errors.sigma_f < truth.sigma, "{:?}", boot.standard_errors);
}

#[test]
fn simulated_residual_variance_is_the_prior_variance() {
    let p = GpParams::new(0.02, 0.05, 1.8).unwrap();
    let mut sum = 0.0;
    let mut count = 0;
    for seed in 0..3000 {
        let sim = simulate_panel(&common::spec(p, 20, 0, seed)).unwrap();
        sum += sim.residuals.iter().map(|r| r * r).sum::<f64>();
        count += sim.residuals.len();
    }
    let v = sum / count as f64;
    let want = p.marginal_variance();
    assert!((v / want - 1.0).abs() < 0.05, "{v} vs {want}");
}

#[test]
fn predictive_adds_the_noise_variance() {
    let mut r = rng(13);
    let x = random_points(&mut r, 20);
    let xs = random_points(&mut r, 4);
    let p = GpParams::new(0.3, 1.0, 2.0).unwrap();
    let res = draw(&x, &p, 13);
    let latent = posterior(&res, &x, &xs, &p).unwrap();
    let pred = predictive(&res, &x, &xs, &p).unwrap();
    assert_eq!(latent.mean, pred.mean);
    for i in 0..4 {
        for j in 0..4 {
            let extra = if i == j { 0.09 } else { 0.0 };
            assert!((pred.covariance[(i, j)] - latent.covariance[(i, j)] - extra).abs() < 1e-15);
        }
    }
    let mut far = [0.0; 9];
    far[4] = -1e4;
    let prior = predictive(&res, &x, &[far], &p).unwrap();
    assert!((prior.variance(0) - p.marginal_variance()).abs() < 1e-12);
}

mod common;

use common::{normals, rng, spec};
use faer::Mat;
use gpx_core::glm::{acf_pacf, calibrate_glm, design_matrix, fit_ols, flag_outliers};
use gpx_core::gp::GpParams;
use gpx_core::simulate::simulate_panel;
use nalgebra::{DMatrix, DVector};

fn iid(sigma: f64) -> GpParams {
    GpParams {
        sigma,
        sigma_f: 0.0,
        sigma_l: 1.0,
    }
}

#[test]
fn ols_matches_normal_equations() {
    let mut r = rng(5);
    let (n, p) = (80, 5);
    let z = normals(&mut r, n * p);
    let x = Mat::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { z[i * p + j] });
    let y: Vec<f64> = (0..n)
        .map(|i| 0.5 - 2.0 * x[(i, 1)] + x[(i, 3)] + 0.3 * z[i * p])
        .collect();
    let cols: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    let fit = fit_ols(x.as_ref(), &y, &cols).unwrap();

    let xm = DMatrix::from_fn(n, p, |i, j| x[(i, j)]);
    let yv = DVector::from_vec(y.clone());
    let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
    let beta = &xtx_inv * xm.transpose() * &yv;
    let resid = &yv - &xm * &beta;
    let rss = resid.norm_squared();
    let s2 = rss / (n - p) as f64;
    for j in 0..p {
        assert!((fit.coefficients[j] - beta[j]).abs() < 1e-10);
        let se = (s2 * xtx_inv[(j, j)]).sqrt();
        assert!((fit.standard_errors[j] - se).abs() < 1e-10 * se.max(1.0));
    }
    assert!((fit.rss - rss).abs() < 1e-10);
    assert_eq!(fit.dof, n - p);
    assert!((fit.residual_variance - s2).abs() < 1e-12);
}

#[test]
fn noiseless_panel_recovers_coefficients() {
    let sim = simulate_panel(&spec(
        GpParams {
            sigma: 0.0,
            sigma_f: 0.0,
            sigma_l: 1.0,
        },
        500,
        0,
        1,
    ))
    .unwrap();
    let panel = sim.panel.slice(0..500);
    let cal = calibrate_glm(&panel, &[]).unwrap();
    let got = cal.params.coefficients.to_array();
    let want = common::truth_glm().to_array();
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-8 * w.abs().max(1.0), "{got:?} vs {want:?}");
    }
    assert!(cal.params.rss < 1e-16);
}

#[test]
fn intervals_cover_truth_under_iid_residuals() {
    let truth = common::truth_glm().to_array();
    let (mut covered, mut total) = (0, 0);
    for seed in 0..40 {
        let sim = simulate_panel(&spec(iid(0.02), 730, 0, seed)).unwrap();
        let cal = calibrate_glm(&sim.panel.slice(0..730), &[]).unwrap();
        let est = cal.params.coefficients.to_array();
        let se = cal.params.standard_errors.to_array();
        for j in 0..7 {
            total += 1;
            covered += usize::from((est[j] - truth[j]).abs() <= 1.96 * se[j]);
        }
    }
    let rate = covered as f64 / total as f64;
    assert!((0.89..=0.99).contains(&rate), "95% CI coverage {rate}");
}

#[test]
fn ar1_correlogram() {
    let phi = 0.6;
    let e = normals(&mut rng(9), 5000);
    let mut x = vec![0.0; e.len()];
    for t in 1..x.len() {
        x[t] = phi * x[t - 1] + e[t];
    }
    let c = acf_pacf(&x, 10).unwrap();
    assert_eq!(c.acf.len(), 10);
    assert!((c.acf[0] - phi).abs() < 0.05);
    assert!((c.acf[1] - phi * phi).abs() < 0.05);
    assert!((c.pacf[0] - c.acf[0]).abs() < 1e-12);
    for k in 1..10 {
        assert!(c.pacf[k].abs() < 0.06, "pacf lag {} = {}", k + 1, c.pacf[k]);
    }
    assert!((c.band - 1.96 / (5000f64).sqrt()).abs() < 1e-15);
}

#[test]
fn simulated_deviation_from_the_mean_path_has_lag_one_acf_gamma() {
    let gamma = common::truth_glm().gamma;
    let noisy = simulate_panel(&spec(iid(0.02), 2000, 0, 4)).unwrap();
    let flat = simulate_panel(&spec(
        GpParams {
            sigma: 0.0,
            sigma_f: 0.0,
            sigma_l: 1.0,
        },
        2000,
        0,
        4,
    ))
    .unwrap();
    let z: Vec<f64> = noisy
        .panel
        .log_consumption()
        .iter()
        .zip(flat.panel.log_consumption())
        .map(|(a, b)| a - b)
        .collect();
    let c = acf_pacf(&z[..2000], 1).unwrap();
    assert!((c.acf[0] - gamma).abs() < 0.05, "lag-1 acf {}", c.acf[0]);
}

#[test]
fn outliers_are_excluded_from_the_fit() {
    let sim = simulate_panel(&spec(iid(0.01), 400, 0, 2)).unwrap();
    let mut records = sim.panel.records().to_vec();
    records[100].consumption *= 1.5;
    records[250].consumption *= 0.6;
    let panel = gpx_core::data::DailyPanel::new(records).unwrap();
    let flagged = flag_outliers(&panel, 3.0).unwrap();
    assert!(flagged.contains(&100) && flagged.contains(&250), "{flagged:?}");

    let robust = calibrate_glm(&panel, &flagged).unwrap();
    assert_eq!(robust.params.n_obs, design_matrix(&panel, true).nrows() - flagged.iter().filter(|&&r| r >= 1).count());
    // residuals are reported for every row after the first, outliers included
    assert_eq!(robust.params.residuals.len(), panel.len() - 1);
    assert_eq!(robust.outliers, flagged);
}

#[test]
fn excluded_final_row_does_not_touch_the_fit() {
    // the last row feeds no lag, so excluding it removes it from the fit entirely
    let sim = simulate_panel(&spec(iid(0.01), 300, 0, 3)).unwrap();
    let mut records = sim.panel.records().to_vec();
    records[299].consumption *= 2.0;
    let spiked = gpx_core::data::DailyPanel::new(records).unwrap();
    let robust = calibrate_glm(&spiked, &[299]).unwrap();
    let reference = calibrate_glm(&sim.panel, &[299]).unwrap();
    assert_eq!(robust.params.coefficients, reference.params.coefficients);
    let naive = calibrate_glm(&spiked, &[]).unwrap();
    assert!(naive.params.residual_variance > 2.0 * robust.params.residual_variance);
}

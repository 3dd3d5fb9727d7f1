use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;

use super::kernel::{add_diagonal, factorize, kernel_symmetric, pairwise_distances};
use super::GpParams;
use crate::data::Regressors;
use crate::error::{check_len, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-likelihood with first and (optionally) expected second derivatives in
/// `theta = (ln sigma_f, ln sigma_l, ln sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub gradient: Option<[f64; 3]>,
    /// Expected information `1/2 tr(H^-1 dH_j H^-1 dH_k)`.
    pub fisher: Option<[[f64; 3]; 3]>,
    /// Observed information (negative Hessian), computed alongside `fisher`.
    pub observed: Option<[[f64; 3]; 3]>,
}

/// Residuals with their pairwise distance matrix, reused across evaluations.
pub struct GpProblem {
    residuals: Vec<f64>,
    distances: Mat<f64>,
}

impl GpProblem {
    pub fn new(residuals: &[f64], x: &[Regressors]) -> Result<Self> {
        check_len(x.len(), residuals.len())?;
        if x.is_empty() {
            return Err(Error::InsufficientData(
                "likelihood of zero residuals".into(),
            ));
        }
        Ok(Self {
            residuals: residuals.to_vec(),
            distances: pairwise_distances(x),
        })
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn distances(&self) -> &Mat<f64> {
        &self.distances
    }

    pub fn log_likelihood(&self, params: &GpParams) -> Result<f64> {
        Ok(self.evaluate(params, false, false)?.log_likelihood)
    }

    /// Evaluate through the Cholesky factor of `H`; the log-determinant is
    /// twice the sum of the log-diagonal of the factor.
    pub fn evaluate(&self, params: &GpParams, gradient: bool, fisher: bool) -> Result<Evaluation> {
        params.validate()?;
        let n = self.n();
        let k = kernel_symmetric(&self.distances, params);
        let mut h = k.clone();
        let s2 = params.sigma * params.sigma;
        add_diagonal(&mut h, s2);
        let f = factorize(&h)?;

        let r = Mat::from_fn(n, 1, |i, _| self.residuals[i]);
        let alpha = f.llt.solve(&r);
        let quad: f64 = (0..n).map(|i| self.residuals[i] * alpha[(i, 0)]).sum();
        let log_likelihood = -0.5 * quad - 0.5 * f.log_det() - 0.5 * n as f64 * LN_2PI;
        if !log_likelihood.is_finite() {
            return Err(Error::Optimizer(format!(
                "non-finite log-likelihood at {params:?}"
            )));
        }
        if !gradient && !fisher {
            return Ok(Evaluation {
                log_likelihood,
                gradient: None,
                fisher: None,
                observed: None,
            });
        }

        // dL/dtheta_j = 1/2 tr((aa' - H^-1) dH_j) with
        //   dH/dln sigma_f = 2K, dH/dln sigma_l = K o D / sigma_l, dH/dln sigma = 2 sigma^2 I
        let h_inv = f.llt.inverse();
        let mut g_f = 0.0;
        let mut g_l = 0.0;
        let mut tr_w = 0.0;
        let mut tr_hinv = 0.0;
        let mut frob_hinv = 0.0;
        let mut m = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let w = alpha[(i, 0)] * alpha[(j, 0)] - h_inv[(i, j)];
                let kd = k[(i, j)] * self.distances[(i, j)] / params.sigma_l;
                m[(i, j)] = kd;
                g_f += w * k[(i, j)];
                g_l += 0.5 * w * kd;
                frob_hinv += h_inv[(i, j)] * h_inv[(i, j)];
            }
            tr_w += alpha[(j, 0)] * alpha[(j, 0)] - h_inv[(j, j)];
            tr_hinv += h_inv[(j, j)];
        }
        let g_s = s2 * tr_w;

        if !fisher {
            return Ok(Evaluation {
                log_likelihood,
                gradient: Some([g_f, g_l, g_s]),
                fisher: None,
                observed: None,
            });
        }

        // A_f = 2(I - s H^-1) with s the full diagonal addition, A_s = 2 sigma^2 H^-1,
        // A_l = H^-1 M. F_jk = 1/2 tr(A_j A_k).
        let s = s2 + f.jitter;
        let p = &h_inv * &m;
        let mut tr_p = 0.0;
        let mut tr_pp = 0.0;
        let mut tr_hinv_p = 0.0;
        for i in 0..n {
            tr_p += p[(i, i)];
            for j in 0..n {
                tr_pp += p[(i, j)] * p[(j, i)];
                tr_hinv_p += h_inv[(i, j)] * p[(j, i)];
            }
        }
        let nf = n as f64;
        let ff = 2.0 * (nf - 2.0 * s * tr_hinv + s * s * frob_hinv);
        let ss = 2.0 * s2 * s2 * frob_hinv;
        let fs = 2.0 * s2 * (tr_hinv - s * frob_hinv);
        let ll = 0.5 * tr_pp;
        let fl = tr_p - s * tr_hinv_p;
        let sl = s2 * tr_hinv_p;
        let fisher = [[ff, fl, fs], [fl, ll, sl], [fs, sl, ss]];

        // J_jk = b_j' H^-1 b_k - 1/2 a' dH_jk a - F_jk + 1/2 tr(H^-1 dH_jk), b_j = dH_j a,
        // with second derivatives dH_ff = 4K, dH_fl = 2M, dH_ll = K o D^2 / sigma_l^2 - M,
        // dH_ss = 4 sigma^2 I and dH_fs = dH_ls = 0.
        let mut b = Mat::<f64>::zeros(n, 3);
        let mut a_k_a = 0.0;
        let mut a_m_a = 0.0;
        let mut a_kd2_a = 0.0;
        let mut tr_hinv_k = 0.0;
        let mut tr_hinv_kd2 = 0.0;
        let l2 = params.sigma_l * params.sigma_l;
        for j in 0..n {
            let aj = alpha[(j, 0)];
            for i in 0..n {
                let kd2 = k[(i, j)] * self.distances[(i, j)] * self.distances[(i, j)] / l2;
                b[(i, 0)] += 2.0 * k[(i, j)] * aj;
                b[(i, 1)] += m[(i, j)] * aj;
                a_k_a += alpha[(i, 0)] * k[(i, j)] * aj;
                a_m_a += alpha[(i, 0)] * m[(i, j)] * aj;
                a_kd2_a += alpha[(i, 0)] * kd2 * aj;
                tr_hinv_k += h_inv[(i, j)] * k[(i, j)];
                tr_hinv_kd2 += h_inv[(i, j)] * kd2;
            }
            b[(j, 2)] = 2.0 * s2 * aj;
        }
        let hb = f.llt.solve(&b);
        let quad = |j: usize, l: usize| (0..n).map(|i| b[(i, j)] * hb[(i, l)]).sum::<f64>();
        let a_a: f64 = (0..n).map(|i| alpha[(i, 0)] * alpha[(i, 0)]).sum();
        // 1/2 (tr(H^-1 dH_jk) - a' dH_jk a) for the non-zero second derivatives
        let second = [
            [2.0 * (tr_hinv_k - a_k_a), tr_p - a_m_a, 0.0],
            [
                tr_p - a_m_a,
                0.5 * (tr_hinv_kd2 - a_kd2_a - tr_p + a_m_a),
                0.0,
            ],
            [0.0, 0.0, 2.0 * s2 * (tr_hinv - a_a)],
        ];
        let mut observed = [[0.0; 3]; 3];
        for j in 0..3 {
            for l in 0..3 {
                observed[j][l] = quad(j, l) - fisher[j][l] + second[j][l];
            }
        }

        Ok(Evaluation {
            log_likelihood,
            gradient: Some([g_f, g_l, g_s]),
            fisher: Some(fisher),
            observed: Some(observed),
        })
    }
}

/// `-1/2 R' H^-1 R - 1/2 ln det H - n/2 ln 2pi`.
pub fn log_marginal_likelihood(
    residuals: &[f64],
    x: &[Regressors],
    params: &GpParams,
) -> Result<f64> {
    GpProblem::new(residuals, x)?.log_likelihood(params)
}

/// Analytic gradient in `(ln sigma_f, ln sigma_l, ln sigma)`.
pub fn log_likelihood_gradient(
    residuals: &[f64],
    x: &[Regressors],
    params: &GpParams,
) -> Result<[f64; 3]> {
    let e = GpProblem::new(residuals, x)?.evaluate(params, true, false)?;
    Ok(e.gradient.expect("requested"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_mode() {
        let x: Vec<Regressors> = (0..6).map(|i| [i as f64; 9]).collect();
        let p = GpParams::new(1.0, 0.0, 1.0).unwrap();
        let ll = log_marginal_likelihood(&[0.0; 6], &x, &p).unwrap();
        assert!((ll + 3.0 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn two_point_closed_form() {
        let mut a = [0.0; 9];
        let mut b = [0.0; 9];
        a[0] = 0.3;
        b[0] = -0.9;
        b[3] = 0.5;
        let p = GpParams::new(0.2, 0.7, 1.3).unwrap();
        let r = [0.4, -0.25];
        let d = ((1.2f64).powi(2) + 0.25).sqrt();
        let diag = 0.49 + 0.04;
        let off = 0.49 * (-d / 1.3).exp();
        let det = diag * diag - off * off;
        let quad = (diag * r[0] * r[0] - 2.0 * off * r[0] * r[1] + diag * r[1] * r[1]) / det;
        let expected = -0.5 * quad - 0.5 * det.ln() - LN_2PI;
        let ll = log_marginal_likelihood(&r, &[a, b], &p).unwrap();
        assert!((ll - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn observed_information_matches_gradient_differences() {
        let x: Vec<Regressors> = (0..12)
            .map(|i| {
                let t = i as f64;
                [
                    t.sin(),
                    (0.7 * t).cos(),
                    0.1 * t,
                    0.0,
                    0.3,
                    -0.2 * t,
                    0.0,
                    1.0,
                    (1.3 * t).sin(),
                ]
            })
            .collect();
        let r: Vec<f64> = (0..12).map(|i| 0.3 * (i as f64 * 1.7).sin()).collect();
        let problem = GpProblem::new(&r, &x).unwrap();
        let theta = [-1.0, 0.4, -1.6];
        let e = problem
            .evaluate(&GpParams::from_theta(&theta), true, true)
            .unwrap();
        let j = e.observed.unwrap();
        let h = 1e-5;
        for c in 0..3 {
            let grad_at = |d: f64| {
                let mut t = theta;
                t[c] += d;
                problem
                    .evaluate(&GpParams::from_theta(&t), true, false)
                    .unwrap()
                    .gradient
                    .unwrap()
            };
            let (up, down) = (grad_at(h), grad_at(-h));
            for row in 0..3 {
                let fd = -(up[row] - down[row]) / (2.0 * h);
                assert!(
                    (fd - j[row][c]).abs() < 1e-6 * j[row][c].abs().max(1.0),
                    "{row},{c}: {fd} vs {}",
                    j[row][c]
                );
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let x = vec![[0.0; 9]; 3];
        let p = GpParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(log_marginal_likelihood(&[0.0; 2], &x, &p).is_err());
    }
}

use faer::linalg::solvers::Solve;
use faer::Mat;

use super::kernel::{
    add_diagonal, cross_distances, factorize, kernel_from_distances, kernel_symmetric,
    pairwise_distances, Factorized,
};
use super::GpParams;
use crate::data::Regressors;
use crate::error::{check_len, Error, Result};

/// Predictive distribution of the out-of-sample residuals.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    /// `K(X*, X) H^-1 R`
    pub mean: Vec<f64>,
    /// `K(X*, X*) - K(X*, X) H^-1 K(X, X*)`, symmetrized.
    pub covariance: Mat<f64>,
}

impl GpPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[(i, i)]
    }

    /// Add i.i.d. noise of scale `sigma` to every test point.
    pub fn with_noise(mut self, sigma: f64) -> Self {
        add_diagonal(&mut self.covariance, sigma * sigma);
        self
    }
}

/// GP conditioned on the in-sample residuals, holding the Cholesky factor of
/// `H(X, X)` so that several test sets can be predicted without refactoring.
pub struct ConditionedGp {
    x: Vec<Regressors>,
    params: GpParams,
    factor: Factorized,
    alpha: Mat<f64>,
}

impl ConditionedGp {
    pub fn new(residuals: &[f64], x: &[Regressors], params: &GpParams) -> Result<Self> {
        params.validate()?;
        check_len(x.len(), residuals.len())?;
        if x.is_empty() {
            return Err(Error::InsufficientData(
                "conditioning on zero residuals".into(),
            ));
        }
        let mut h = kernel_symmetric(&pairwise_distances(x), params);
        add_diagonal(&mut h, params.sigma * params.sigma);
        let factor = factorize(&h)?;
        let r = Mat::from_fn(x.len(), 1, |i, _| residuals[i]);
        let alpha = factor.llt.solve(&r);
        Ok(Self {
            x: x.to_vec(),
            params: *params,
            factor,
            alpha,
        })
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    pub fn factor(&self) -> &Factorized {
        &self.factor
    }

    pub fn posterior(&self, x_star: &[Regressors]) -> Result<GpPosterior> {
        let k_star = kernel_from_distances(&cross_distances(x_star, &self.x), &self.params);
        let mean_m = &k_star * &self.alpha;
        let mean = (0..x_star.len()).map(|i| mean_m[(i, 0)]).collect();

        // V = L^-1 K(X, X*), cov = K** - V'V
        let mut v = k_star.transpose().to_owned();
        self.factor
            .llt
            .L()
            .solve_lower_triangular_in_place(v.as_mut());
        let k_ss = kernel_symmetric(&pairwise_distances(x_star), &self.params);
        let vtv = v.transpose() * &v;
        let m = x_star.len();
        let covariance = Mat::from_fn(m, m, |i, j| {
            0.5 * ((k_ss[(i, j)] - vtv[(i, j)]) + (k_ss[(j, i)] - vtv[(j, i)]))
        });
        Ok(GpPosterior { mean, covariance })
    }

    /// [`posterior`](Self::posterior) with `sigma^2` added on the diagonal.
    pub fn predictive(&self, x_star: &[Regressors]) -> Result<GpPosterior> {
        Ok(self.posterior(x_star)?.with_noise(self.params.sigma))
    }
}

/// Latent posterior plus the noise variance: the predictive distribution of
/// the residuals themselves, which is what enters the consumption forecast.
pub fn predictive(
    residuals: &[f64],
    x: &[Regressors],
    x_star: &[Regressors],
    params: &GpParams,
) -> Result<GpPosterior> {
    ConditionedGp::new(residuals, x, params)?.predictive(x_star)
}

pub fn posterior(
    residuals: &[f64],
    x: &[Regressors],
    x_star: &[Regressors],
    params: &GpParams,
) -> Result<GpPosterior> {
    ConditionedGp::new(residuals, x, params)?.posterior(x_star)
}

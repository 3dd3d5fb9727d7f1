//! Gaussian-Process model of the GLM residuals over the standardized
//! weather/calendar regressors.
//!
//! The covariance between two days is
//! `h(x, x') = sigma_f^2 exp(-|x - x'| / sigma_l) + sigma^2 [x == x']`
//! where `|.|` is the Euclidean distance between standardized regressors.

pub(crate) mod bootstrap;
pub(crate) mod kernel;
mod likelihood;
mod optimize;
mod posterior;

pub use bootstrap::{bootstrap_se, BootstrapResult};
pub use kernel::{
    covariance_h, cross_distances, factorize, kernel_k, pairwise_distances, sed, Factorized,
};
pub use likelihood::{log_likelihood_gradient, log_marginal_likelihood, Evaluation, GpProblem};
pub use optimize::{
    fit_gp, fit_gp_from, heuristic_init, AscentDirection, FitStatus, GpFit, OptimizerSettings,
    StartSummary, TraceEntry,
};
pub use posterior::{posterior, predictive, ConditionedGp, GpPosterior};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel hyperparameters. `sigma` is the i.i.d. noise scale, `sigma_f` the
/// signal scale (both in log-consumption units) and `sigma_l` the length
/// scale in standardized-distance units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub sigma: f64,
    pub sigma_f: f64,
    pub sigma_l: f64,
}

impl GpParams {
    pub fn new(sigma: f64, sigma_f: f64, sigma_l: f64) -> Result<Self> {
        let p = Self {
            sigma,
            sigma_f,
            sigma_l,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.sigma_f >= 0.0
            && self.sigma_l > 0.0
            && self.sigma.is_finite()
            && self.sigma_f.is_finite()
            && self.sigma_l.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "need sigma > 0, sigma_f >= 0, sigma_l > 0; got {self:?}"
            )))
        }
    }

    /// Optimization coordinates `(ln sigma_f, ln sigma_l, ln sigma)`.
    pub fn to_theta(&self) -> [f64; 3] {
        [self.sigma_f.ln(), self.sigma_l.ln(), self.sigma.ln()]
    }

    pub fn from_theta(theta: &[f64; 3]) -> Self {
        Self {
            sigma_f: theta[0].exp(),
            sigma_l: theta[1].exp(),
            sigma: theta[2].exp(),
        }
    }

    /// Prior variance of a single residual, `sigma_f^2 + sigma^2`.
    pub fn marginal_variance(&self) -> f64 {
        self.sigma_f * self.sigma_f + self.sigma * self.sigma
    }
}

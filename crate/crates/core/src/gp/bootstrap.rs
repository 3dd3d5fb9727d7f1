use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{covariance_h, factorize};
use super::optimize::{fit_gp_from, OptimizerSettings};
use super::GpParams;
use crate::data::Regressors;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicas: usize,
    pub failed: usize,
    /// Sample standard deviation of each parameter across successful replicas.
    pub standard_errors: GpParams,
    #[serde(skip)]
    pub estimates: Vec<GpParams>,
}

/// Draw `n` residual vectors jointly from `N(0, H)` through its Cholesky factor.
pub(crate) fn sample_gaussian(l: faer::MatRef<'_, f64>, z: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let zm = Mat::from_fn(n, 1, |i, _| z[i]);
    let s = l * &zm;
    (0..n).map(|i| s[(i, 0)]).collect()
}

/// Parametric bootstrap of the GP hyperparameters.
///
/// Each replica draws residuals from `N(0, H(X, X; params))` with its own RNG
/// stream `(seed, replica)` and refits from `params` with a single start. The
/// GLM part is held fixed. Failed refits are skipped; more than 10% failures
/// is an error.
pub fn bootstrap_se(
    x: &[Regressors],
    params: &GpParams,
    replicas: usize,
    seed: u64,
    opts: &OptimizerSettings,
) -> Result<BootstrapResult> {
    if replicas < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 2 replicas, got {replicas}"
        )));
    }
    let h = covariance_h(x, params)?;
    let factor = factorize(&h)?;
    let l = factor.llt.L();
    let single = opts.single_start();

    let draw = |i: usize| -> Vec<f64> {
        let mut rng = seed::rng_for_index(seed, "gp-bootstrap", i as u64);
        let z: Vec<f64> = (0..x.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        sample_gaussian(l, &z)
    };
    let samples: Vec<Vec<f64>> = (0..replicas).map(draw).collect();
    let fits: Vec<Option<GpParams>> = samples
        .par_iter()
        .map(|r| match fit_gp_from(r, x, params, &single) {
            Ok(fit) => Some(fit.params),
            Err(e) => {
                log::debug!("bootstrap replica failed: {e}");
                None
            }
        })
        .collect();

    let estimates: Vec<GpParams> = fits.into_iter().flatten().collect();
    let failed = replicas - estimates.len();
    if failed * 10 > replicas || estimates.len() < 2 {
        return Err(Error::Bootstrap {
            failed,
            total: replicas,
        });
    }
    let col = |f: fn(&GpParams) -> f64| -> f64 {
        stats::sample_std(&estimates.iter().map(f).collect::<Vec<_>>())
    };
    Ok(BootstrapResult {
        replicas,
        failed,
        standard_errors: GpParams {
            sigma: col(|p| p.sigma),
            sigma_f: col(|p| p.sigma_f),
            sigma_l: col(|p| p.sigma_l),
        },
        estimates,
    })
}

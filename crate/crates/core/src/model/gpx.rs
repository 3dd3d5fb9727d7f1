use chrono::NaiveDate;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CalibratedModel, ForecastModel, ModelArtifact, ModelConfig, ModelKind, Prepared};
use crate::data::{DailyPanel, DailyRecord, DateRange, Standardization};
use crate::error::{Error, Result};
use crate::forecast::{density_forecast, DensityForecast};
use crate::glm::{calibrate_glm, glm_residuals, GlmCoefficients, GlmParams, GlmReport};
use crate::gp::{
    covariance_h, factorize, fit_gp, fit_gp_from, ConditionedGp, GpFit, GpParams, GpPosterior,
    OptimizerSettings,
};
use crate::{seed, stats};

/// GLM for trend, seasonality and AR(1), with the residuals modelled by a
/// Gaussian Process over the standardized weather and calendar regressors.
#[derive(Debug, Clone)]
pub struct GpxModel {
    config: ModelConfig,
}

impl GpxModel {
    pub fn new(config: ModelConfig) -> Self {
        Self { config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpxArtifact {
    pub in_sample: DateRange,
    pub outliers: Vec<NaiveDate>,
    pub glm: GlmParams,
    pub glm_report: GlmReport,
    pub gp: GpParams,
    pub standardization: Standardization,
    pub fit: GpFit,
    pub bootstrap: Option<CalibrationBootstrap>,
}

/// Parametric bootstrap of the full two-stage calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBootstrap {
    pub replicas: usize,
    pub failed: usize,
    /// Standard errors of the GLM coefficients.
    pub glm: GlmCoefficients,
    /// Standard errors of the GP hyperparameters.
    pub gp: GpParams,
}

/// Bootstrap standard errors of every calibrated parameter.
///
/// Each replica draws IS residuals from `N(0, H)` under the fitted GP (RNG
/// stream `(seed, replica)`), rolls log-consumption forward through the fitted
/// GLM from the observed first day, and repeats the calibration: GLM by OLS
/// with the same outlier rows excluded, then the GP refit from `gp` with a
/// single start. Refitting the GLM lets the GP-correlated residuals show up
/// in the spread of the GLM coefficients, the AR term in particular. Failed
/// replicas are skipped; more than 10% failures is an error.
pub fn bootstrap_calibration(
    data: &Prepared,
    glm: &GlmCoefficients,
    gp: &GpParams,
    replicas: usize,
    seed: u64,
    opts: &OptimizerSettings,
) -> Result<CalibrationBootstrap> {
    if replicas < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 2 replicas, got {replicas}"
        )));
    }
    let panel = data.in_sample_panel();
    let x = data.residual_regressors(&data.regressors);
    let factor = factorize(&covariance_h(x, gp)?)?;
    let l = factor.llt.L();
    let single = opts.single_start();
    let y0 = panel.log_consumption()[0];
    let calendars = panel.calendars();

    let replica = |i: usize| -> Result<(GlmCoefficients, GpParams)> {
        let mut rng = seed::rng_for_index(seed, "gpx-bootstrap", i as u64);
        let z: Vec<f64> = (0..x.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let r = crate::gp::bootstrap::sample_gaussian(l, &z);
        let mut y = y0;
        let records: Vec<DailyRecord> = panel
            .records()
            .iter()
            .enumerate()
            .map(|(t, rec)| {
                if t > 0 {
                    y = glm.time_effect(&calendars[t]) + glm.gamma * y + r[t - 1];
                }
                DailyRecord {
                    consumption: y.exp(),
                    ..*rec
                }
            })
            .collect();
        let sample = DailyPanel::new(records)?.with_first_day(panel.first_day());
        let cal = calibrate_glm(&sample, &data.outliers)?;
        let fit = fit_gp_from(&cal.params.residuals, x, gp, &single)?;
        Ok((cal.params.coefficients, fit.params))
    };
    let estimates: Vec<(GlmCoefficients, GpParams)> = (0..replicas)
        .into_par_iter()
        .map(replica)
        .collect::<Vec<_>>()
        .into_iter()
        .filter_map(|r| {
            r.map_err(|e| log::debug!("bootstrap replica failed: {e}"))
                .ok()
        })
        .collect();
    let failed = replicas - estimates.len();
    if failed * 10 > replicas || estimates.len() < 2 {
        return Err(Error::Bootstrap {
            failed,
            total: replicas,
        });
    }
    let sd = |f: &dyn Fn(&(GlmCoefficients, GpParams)) -> f64| {
        stats::sample_std(&estimates.iter().map(f).collect::<Vec<_>>())
    };
    let glm_se: Vec<f64> = (0..7).map(|j| sd(&|e| e.0.to_array()[j])).collect();
    Ok(CalibrationBootstrap {
        replicas,
        failed,
        glm: GlmCoefficients::from_slice(&glm_se),
        gp: GpParams {
            sigma: sd(&|e| e.1.sigma),
            sigma_f: sd(&|e| e.1.sigma_f),
            sigma_l: sd(&|e| e.1.sigma_l),
        },
    })
}

impl GpxArtifact {
    /// Predictive distribution of the OS residuals given the IS residuals of
    /// `data`, noise included.
    pub fn posterior(&self, data: &Prepared) -> Result<GpPosterior> {
        data.check_calibrated_on(&self.in_sample)?;
        let x = data.regressors_with(&self.standardization);
        let residuals = glm_residuals(&self.glm.coefficients, &data.in_sample_panel());
        ConditionedGp::new(&residuals, data.residual_regressors(&x), &self.gp)?
            .predictive(data.os_regressors(&x))
    }
}

impl ForecastModel for GpxModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Gpx
    }

    fn calibrate(&self, data: &Prepared) -> Result<Box<dyn CalibratedModel>> {
        let cal = calibrate_glm(&data.in_sample_panel(), &data.outliers)?;
        let x = data.residual_regressors(&data.regressors);
        let fit = fit_gp(&cal.params.residuals, x, &self.config.optimizer)?;
        log::info!(
            "GP fit: {:?} after {} iterations, log-likelihood {}",
            fit.status,
            fit.iterations,
            fit.log_likelihood
        );
        let bootstrap = match self.config.bootstrap_replicas {
            0 => None,
            b => Some(bootstrap_calibration(
                data,
                &cal.params.coefficients,
                &fit.params,
                b,
                self.config.seed,
                &self.config.optimizer,
            )?),
        };
        Ok(Box::new(GpxArtifact {
            in_sample: data.in_sample_range,
            outliers: data.outlier_dates(),
            glm_report: GlmReport::new(&cal),
            glm: cal.params,
            gp: fit.params,
            standardization: data.regressors.standardization.clone(),
            fit,
            bootstrap,
        }))
    }
}

impl CalibratedModel for GpxArtifact {
    fn kind(&self) -> ModelKind {
        ModelKind::Gpx
    }

    fn forecast(&self, data: &Prepared) -> Result<DensityForecast> {
        let post = self.posterior(data)?;
        density_forecast(
            &self.glm.coefficients,
            &post,
            &data.os_calendars(),
            data.os_dates(),
            data.last_log_consumption(),
        )
    }

    fn artifact(&self) -> ModelArtifact {
        ModelArtifact::Gpx(Box::new(self.clone()))
    }
}

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CalibratedModel, ForecastModel, ModelArtifact, ModelKind, Prepared};
use crate::data::{DateRange, Standardization, N_WEATHER, WEATHER_COLUMNS};
use crate::error::Result;
use crate::forecast::{ar1_variance, forecast_mean, DensityForecast};
use crate::glm::{design_matrix, fit_ols, GlmCoefficients};

/// GLM with the standardized weather indicators as extra linear regressors
/// and homoskedastic Gaussian residuals.
///
/// The calendar harmonics of the kernel regressors are left out: they are
/// the GLM's own seasonal columns up to an affine map.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArxModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxArtifact {
    pub in_sample: DateRange,
    pub outliers: Vec<NaiveDate>,
    pub glm: GlmCoefficients,
    pub glm_standard_errors: GlmCoefficients,
    /// Coefficients of the standardized weather columns, in canonical order.
    pub weather: [f64; N_WEATHER],
    pub weather_standard_errors: [f64; N_WEATHER],
    pub residual_variance: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub standardization: Standardization,
}

impl ArxArtifact {
    fn weather_effect(&self, x: &[f64]) -> f64 {
        self.weather.iter().zip(x).map(|(b, x)| b * x).sum()
    }
}

impl ForecastModel for ArxModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Arx
    }

    fn calibrate(&self, data: &Prepared) -> Result<Box<dyn CalibratedModel>> {
        let panel = data.in_sample_panel();
        let x = &data.regressors;
        let design = design_matrix(&panel, true)
            .with_columns(&WEATHER_COLUMNS, |row, j| x.rows[row][j])
            .filter_rows(|r| data.outliers.binary_search(&r).is_err());
        let log_y = panel.log_consumption();
        let y: Vec<f64> = design.rows.iter().map(|&r| log_y[r]).collect();
        let fit = fit_ols(design.x.as_ref(), &y, &design.columns)?;
        let mut weather = [0.0; N_WEATHER];
        let mut weather_se = [0.0; N_WEATHER];
        weather.copy_from_slice(&fit.coefficients[7..]);
        weather_se.copy_from_slice(&fit.standard_errors[7..]);
        Ok(Box::new(ArxArtifact {
            in_sample: data.in_sample_range,
            outliers: data.outlier_dates(),
            glm: GlmCoefficients::from_slice(&fit.coefficients[..7]),
            glm_standard_errors: GlmCoefficients::from_slice(&fit.standard_errors[..7]),
            weather,
            weather_standard_errors: weather_se,
            residual_variance: fit.residual_variance,
            rss: fit.rss,
            n_obs: y.len(),
            standardization: x.standardization.clone(),
        }))
    }
}

impl CalibratedModel for ArxArtifact {
    fn kind(&self) -> ModelKind {
        ModelKind::Arx
    }

    fn forecast(&self, data: &Prepared) -> Result<DensityForecast> {
        data.check_calibrated_on(&self.in_sample)?;
        let x = data.regressors_with(&self.standardization);
        let shift: Vec<f64> = data
            .os_regressors(&x)
            .iter()
            .map(|r| self.weather_effect(&r[..N_WEATHER]))
            .collect();
        let mean = forecast_mean(
            &self.glm,
            &data.os_calendars(),
            &shift,
            data.last_log_consumption(),
        )?;
        let var = ar1_variance(self.glm.gamma, self.residual_variance, data.n_star());
        DensityForecast::new(data.os_dates(), mean, var)
    }

    fn artifact(&self) -> ModelArtifact {
        ModelArtifact::Arx(self.clone())
    }
}

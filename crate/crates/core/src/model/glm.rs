use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CalibratedModel, ForecastModel, ModelArtifact, ModelKind, Prepared};
use crate::data::DateRange;
use crate::error::Result;
use crate::forecast::{ar1_variance, forecast_mean, DensityForecast};
use crate::glm::{calibrate_glm, GlmParams, GlmReport};

/// Trend + seasonality + AR(1) with i.i.d. Gaussian residuals; the GP model
/// with `sigma_f = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlmModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmArtifact {
    pub in_sample: DateRange,
    pub outliers: Vec<NaiveDate>,
    pub glm: GlmParams,
    pub report: GlmReport,
}

impl ForecastModel for GlmModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Glm
    }

    fn calibrate(&self, data: &Prepared) -> Result<Box<dyn CalibratedModel>> {
        let cal = calibrate_glm(&data.in_sample_panel(), &data.outliers)?;
        Ok(Box::new(GlmArtifact {
            in_sample: data.in_sample_range,
            outliers: data.outlier_dates(),
            report: GlmReport::new(&cal),
            glm: cal.params,
        }))
    }
}

impl CalibratedModel for GlmArtifact {
    fn kind(&self) -> ModelKind {
        ModelKind::Glm
    }

    fn forecast(&self, data: &Prepared) -> Result<DensityForecast> {
        data.check_calibrated_on(&self.in_sample)?;
        let coef = &self.glm.coefficients;
        let m = data.n_star();
        let mean = forecast_mean(
            coef,
            &data.os_calendars(),
            &vec![0.0; m],
            data.last_log_consumption(),
        )?;
        let var = ar1_variance(coef.gamma, self.glm.residual_variance, m);
        DensityForecast::new(data.os_dates(), mean, var)
    }

    fn artifact(&self) -> ModelArtifact {
        ModelArtifact::Glm(self.clone())
    }
}

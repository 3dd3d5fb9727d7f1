//! Forecasting strategies behind a common interface.
//!
//! A [`ForecastModel`] calibrates on the in-sample part of a [`Prepared`]
//! panel and returns a [`CalibratedModel`], which produces density forecasts
//! for the out-of-sample days and can be serialized as a [`ModelArtifact`].
//! Strategies are looked up by name in a [`ModelRegistry`].

mod arx;
mod glm;
mod gpx;
mod prepare;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use arx::{ArxArtifact, ArxModel};
pub use glm::{GlmArtifact, GlmModel};
pub use gpx::{bootstrap_calibration, CalibrationBootstrap, GpxArtifact, GpxModel};
pub use prepare::Prepared;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvaluationReport, EvaluationSettings};
use crate::forecast::DensityForecast;
use crate::gp::OptimizerSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Trend, seasonality and AR(1) with i.i.d. Gaussian residuals.
    Glm,
    /// GLM plus weather as linear regressors.
    Arx,
    /// GLM plus Gaussian-Process residuals.
    Gpx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Glm, ModelKind::Arx, ModelKind::Gpx];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Glm => "glm",
            ModelKind::Arx => "arx",
            ModelKind::Gpx => "gpx",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Settings shared by all strategies; each uses the parts it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub optimizer: OptimizerSettings,
    /// Parametric bootstrap replicas for the GP standard errors (0 disables).
    pub bootstrap_replicas: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSettings::default(),
            bootstrap_replicas: 1000,
            seed: 0,
        }
    }
}

pub trait ForecastModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn calibrate(&self, data: &Prepared) -> Result<Box<dyn CalibratedModel>>;
}

pub trait CalibratedModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Densities for the out-of-sample days of `data`, whose in-sample range
    /// must be the one the model was calibrated on.
    fn forecast(&self, data: &Prepared) -> Result<DensityForecast>;

    fn artifact(&self) -> ModelArtifact;
}

/// Serializable state of a calibrated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelArtifact {
    Glm(GlmArtifact),
    Arx(ArxArtifact),
    Gpx(Box<GpxArtifact>),
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelArtifact::Glm(_) => ModelKind::Glm,
            ModelArtifact::Arx(_) => ModelKind::Arx,
            ModelArtifact::Gpx(_) => ModelKind::Gpx,
        }
    }

    pub fn into_model(self) -> Box<dyn CalibratedModel> {
        match self {
            ModelArtifact::Glm(a) => Box::new(a),
            ModelArtifact::Arx(a) => Box::new(a),
            ModelArtifact::Gpx(a) => Box::new(*a),
        }
    }
}

pub type ModelFactory = Box<dyn Fn(&ModelConfig) -> Box<dyn ForecastModel> + Send + Sync>;

/// Name -> strategy constructor.
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with `glm`, `arx` and `gpx`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("glm", |_| Box::new(GlmModel));
        r.register("arx", |_| Box::new(ArxModel));
        r.register("gpx", |cfg| Box::new(GpxModel::new(cfg.clone())));
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&ModelConfig) -> Box<dyn ForecastModel> + Send + Sync + 'static,
    ) {
        self.factories
            .insert(name.to_ascii_lowercase(), Box::new(factory));
    }

    pub fn create(&self, name: &str, config: &ModelConfig) -> Result<Box<dyn ForecastModel>> {
        self.factories
            .get(&name.trim().to_ascii_lowercase())
            .map(|f| f(config))
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// One model's run through calibration, forecast and evaluation.
pub struct ModelRun {
    pub calibrated: Box<dyn CalibratedModel>,
    pub forecast: DensityForecast,
    pub report: EvaluationReport,
}

pub fn run_model(
    model: &dyn ForecastModel,
    data: &Prepared,
    settings: &EvaluationSettings,
) -> Result<ModelRun> {
    let calibrated = model.calibrate(data)?;
    let forecast = calibrated.forecast(data)?;
    let report = evaluate(model.kind(), &forecast, &data.os_consumption(), settings)?;
    Ok(ModelRun {
        calibrated,
        forecast,
        report,
    })
}

/// Calibrate each model on the in-sample rows, forecast ex post and score,
/// in the order given.
pub fn compare_models(
    models: &[Box<dyn ForecastModel>],
    data: &Prepared,
    settings: &EvaluationSettings,
) -> Result<Vec<ModelRun>> {
    if data.n_star() == 0 {
        return Err(Error::InvalidSplit(
            "comparison needs out-of-sample days".into(),
        ));
    }
    models
        .iter()
        .map(|m| run_model(m.as_ref(), data, settings))
        .collect()
}

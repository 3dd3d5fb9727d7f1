use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gpx_core::data::{ColumnMap, DateRange};
use gpx_core::evaluation::{EvaluationSettings, BACKTEST_LEVEL, LR_TEST_LEVEL};
use gpx_core::forecast::{validate_levels, PointForecast, DEFAULT_LEVELS};
use gpx_core::gp::OptimizerSettings;
use gpx_core::model::ModelConfig;
use gpx_core::simulate::SyntheticSpec;
use gpx_core::Error;

use crate::RunArgs;

/// Everything a run depends on. Written back as `config.toml` into the output
/// directory; re-running with that file reproduces the outputs.
///
/// Plain values come before the nested tables so the file serializes as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// `START:END`, inclusive ISO dates.
    pub is_range: Option<String>,
    pub os_range: Option<String>,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub model: String,
    pub bootstrap_replicas: usize,
    /// Outlier threshold in robust standard deviations; 0 disables flagging.
    pub outlier_k: f64,
    pub point: PointForecast,
    pub backtest_level: f64,
    pub test_level: f64,
    /// Model artifact read by `forecast` (default `<out>/model.json`).
    pub artifact: Option<PathBuf>,
    /// Forecast CSV read by `evaluate` (default `<out>/forecast.csv`).
    pub forecast: Option<PathBuf>,
    pub optimizer: OptimizerSettings,
    /// Header names of the input CSV, keyed by canonical field name.
    pub columns: ColumnMap,
    /// Synthetic panel drawn by `simulate`; its seed follows `seed`.
    pub simulate: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: PathBuf::from("out"),
            is_range: None,
            os_range: None,
            levels: DEFAULT_LEVELS.to_vec(),
            seed: 0,
            model: "gpx".into(),
            bootstrap_replicas: 1000,
            outlier_k: 3.0,
            point: PointForecast::Median,
            backtest_level: BACKTEST_LEVEL,
            test_level: LR_TEST_LEVEL,
            artifact: None,
            forecast: None,
            optimizer: OptimizerSettings::default(),
            columns: ColumnMap::canonical(),
            simulate: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config `{path}`: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{0} is required (flag or config key)")]
    Missing(&'static str),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Config file (if any) with the flags applied on top.
    pub fn from_args(args: &RunArgs) -> Result<Self, ConfigError> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(v) = &args.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &args.out {
            cfg.out = v.clone();
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = &args.is_range {
            cfg.is_range = Some(v.clone());
        }
        if let Some(v) = &args.os_range {
            cfg.os_range = Some(v.clone());
        }
        if let Some(v) = &args.levels {
            cfg.levels = v.clone();
        }
        if let Some(v) = &args.model {
            cfg.model = v.clone();
        }
        if let Some(v) = args.replicas {
            cfg.bootstrap_replicas = v;
        }
        if let Some(v) = &args.artifact {
            cfg.artifact = Some(v.clone());
        }
        if let Some(v) = &args.forecast {
            cfg.forecast = Some(v.clone());
        }
        // one seed drives every random stream
        cfg.simulate.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn input(&self) -> Result<&Path, ConfigError> {
        self.input.as_deref().ok_or(ConfigError::Missing("input"))
    }

    pub fn in_sample(&self) -> Result<DateRange, crate::CliError> {
        let s = self
            .is_range
            .as_deref()
            .ok_or(ConfigError::Missing("is_range"))?;
        Ok(s.parse()?)
    }

    pub fn out_of_sample(&self) -> Result<Option<DateRange>, Error> {
        self.os_range.as_deref().map(str::parse).transpose()
    }

    pub fn outlier_k(&self) -> Option<f64> {
        (self.outlier_k > 0.0).then_some(self.outlier_k)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            optimizer: self.optimizer.clone(),
            bootstrap_replicas: self.bootstrap_replicas,
            seed: self.seed,
        }
    }

    pub fn evaluation(&self) -> Result<EvaluationSettings, Error> {
        validate_levels(&self.levels)?;
        Ok(EvaluationSettings {
            levels: self.levels.clone(),
            backtest_level: self.backtest_level,
            test_level: self.test_level,
            point: self.point,
        })
    }

    pub fn artifact_path(&self) -> PathBuf {
        self.artifact
            .clone()
            .unwrap_or_else(|| self.out.join("model.json"))
    }

    pub fn forecast_path(&self) -> PathBuf {
        self.forecast
            .clone()
            .unwrap_or_else(|| self.out.join("forecast.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig {
            input: Some("panel.csv".into()),
            is_range: Some("2014-04-01:2016-03-31".into()),
            ..RunConfig::default()
        };
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\nmodel = \"arx\"\nlevels = [0.5, 0.8]\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            seed: Some(9),
            ..RunArgs::default()
        };
        let cfg = RunConfig::from_args(&args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model, "arx");
        assert_eq!(cfg.levels, vec![0.5, 0.8]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 4\n").is_err());
    }
}

//! Hybrid density forecasting of daily power consumption.
//!
//! Log-consumption is modelled as trend + yearly/weekly seasonality + AR(1)
//! (the `glm` module) plus residuals that follow a Gaussian Process over
//! standardized weather and calendar regressors (the `gp` module). The
//! `forecast` module turns a calibrated model into per-day Gaussian densities
//! up to a year ahead, and `evaluation` scores them with pinball, Winkler
//! and coverage backtests.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod glm;
pub mod gp;
pub mod model;
pub mod seed;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

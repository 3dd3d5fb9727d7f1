//! Scoring of density forecasts against realized consumption.
//!
//! Accuracy (RMSE, MAPE), sharpness (pinball and Winkler curves) and
//! reliability (empirical coverage with Kupiec / Christoffersen likelihood
//! ratio backtests). All scores are computed in consumption units (MWh).

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{check_len, Error, Result};
use crate::forecast::{level_label, validate_levels, DensityForecast, PointForecast};
use crate::model::ModelKind;

/// Test level of the LR backtests.
pub const LR_TEST_LEVEL: f64 = 0.90;
/// Nominal CI level whose violations are backtested.
pub const BACKTEST_LEVEL: f64 = 0.99;

/// `x ln y` with `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Bernoulli log-likelihood of `n1` ones and `n0` zeros at hit probability `p`.
fn bernoulli_ll(p: f64, n0: usize, n1: usize) -> f64 {
    xlny(n0 as f64, 1.0 - p) + xlny(n1 as f64, p)
}

/// Upper `level` quantile of the chi-squared distribution.
pub fn chi2_threshold(dof: u32, level: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(level)
}

pub fn rmse_mape(forecast: &[f64], realized: &[f64]) -> Result<(f64, f64)> {
    check_len(realized.len(), forecast.len())?;
    if realized.is_empty() {
        return Err(Error::InsufficientData("no days to score".into()));
    }
    if let Some((row, &value)) = realized.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveConsumption {
            row: row + 1,
            value,
        });
    }
    let n = realized.len() as f64;
    let mut se = 0.0;
    let mut ape = 0.0;
    for (f, y) in forecast.iter().zip(realized) {
        let e = f - y;
        se += e * e;
        ape += e.abs() / y;
    }
    Ok(((se / n).sqrt(), 100.0 * ape / n))
}

/// Pinball loss of one quantile forecast.
pub fn pinball_loss(quantile: f64, realized: f64, q: f64) -> f64 {
    if realized < quantile {
        (1.0 - q) * (quantile - realized)
    } else {
        q * (realized - quantile)
    }
}

/// Mean pinball loss over days.
pub fn pinball(quantiles: &[f64], realized: &[f64], q: f64) -> Result<f64> {
    check_len(realized.len(), quantiles.len())?;
    check_unit(q)?;
    Ok(mean_of(
        quantiles
            .iter()
            .zip(realized)
            .map(|(&f, &y)| pinball_loss(f, y, q)),
        realized.len(),
    ))
}

/// Winkler score of one central `q` interval.
pub fn winkler_score(lower: f64, upper: f64, realized: f64, q: f64) -> f64 {
    let width = upper - lower;
    if realized < lower {
        width + 2.0 * (lower - realized) / (1.0 - q)
    } else if realized > upper {
        width + 2.0 * (realized - upper) / (1.0 - q)
    } else {
        width
    }
}

pub fn winkler(lower: &[f64], upper: &[f64], realized: &[f64], q: f64) -> Result<f64> {
    check_len(realized.len(), lower.len())?;
    check_len(realized.len(), upper.len())?;
    check_unit(q)?;
    if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidParameter(format!(
            "day {i}: lower bound {} above upper bound {}",
            lower[i], upper[i]
        )));
    }
    Ok(mean_of(
        (0..realized.len()).map(|i| winkler_score(lower[i], upper[i], realized[i], q)),
        realized.len(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// `1` when the realized value falls inside the interval.
    pub indicators: Vec<u8>,
    pub coverage: f64,
}

pub fn coverage_indicator(lower: &[f64], upper: &[f64], realized: &[f64]) -> Result<Coverage> {
    check_len(realized.len(), lower.len())?;
    check_len(realized.len(), upper.len())?;
    let indicators: Vec<u8> = (0..realized.len())
        .map(|i| u8::from(lower[i] <= realized[i] && realized[i] <= upper[i]))
        .collect();
    let hits = indicators.iter().filter(|&&i| i == 1).count();
    let coverage = if indicators.is_empty() {
        0.0
    } else {
        hits as f64 / indicators.len() as f64
    };
    Ok(Coverage {
        indicators,
        coverage,
    })
}

/// Kupiec unconditional coverage statistic, asymptotically chi-squared(1).
///
/// `q` is the nominal probability of a hit (`I = 1`).
pub fn lr_unconditional(indicators: &[u8], q: f64) -> Result<f64> {
    check_unit(q)?;
    if indicators.is_empty() {
        return Err(Error::InsufficientData("empty indicator series".into()));
    }
    let n1 = indicators.iter().filter(|&&i| i == 1).count();
    let n0 = indicators.len() - n1;
    let pi = n1 as f64 / indicators.len() as f64;
    Ok((-2.0 * (bernoulli_ll(q, n0, n1) - bernoulli_ll(pi, n0, n1))).max(0.0))
}

/// First-order transition counts `n[i][j]` = number of `i -> j` steps.
pub fn transition_counts(indicators: &[u8]) -> [[usize; 2]; 2] {
    let mut n = [[0usize; 2]; 2];
    for w in indicators.windows(2) {
        n[(w[0] == 1) as usize][(w[1] == 1) as usize] += 1;
    }
    n
}

/// Christoffersen independence statistic: a first-order Markov chain against
/// a single hit probability over the same transitions, chi-squared(1).
pub fn lr_independence(indicators: &[u8]) -> Result<f64> {
    if indicators.len() < 2 {
        return Err(Error::InsufficientData(
            "conditional coverage needs at least two days".into(),
        ));
    }
    let n = transition_counts(indicators);
    let ratio = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            b as f64 / (a + b) as f64
        }
    };
    let pi01 = ratio(n[0][0], n[0][1]);
    let pi11 = ratio(n[1][0], n[1][1]);
    let pi = ratio(n[0][0] + n[1][0], n[0][1] + n[1][1]);
    let markov = bernoulli_ll(pi01, n[0][0], n[0][1]) + bernoulli_ll(pi11, n[1][0], n[1][1]);
    let iid = bernoulli_ll(pi, n[0][0] + n[1][0], n[0][1] + n[1][1]);
    Ok((-2.0 * (iid - markov)).max(0.0))
}

/// Christoffersen conditional coverage `LR_UC + LR_ind`, chi-squared(2).
pub fn lr_conditional(indicators: &[u8], q: f64) -> Result<f64> {
    Ok(lr_unconditional(indicators, q)? + lr_independence(indicators)?)
}

fn check_unit(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "probability {q} outside (0, 1)"
        )))
    }
}

fn mean_of(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSettings {
    pub levels: Vec<f64>,
    pub backtest_level: f64,
    pub test_level: f64,
    pub point: PointForecast,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            levels: crate::forecast::DEFAULT_LEVELS.to_vec(),
            backtest_level: BACKTEST_LEVEL,
            test_level: LR_TEST_LEVEL,
            point: PointForecast::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub level: f64,
    pub coverage: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub level: f64,
    pub test_level: f64,
    pub lr_uc: f64,
    pub lr_cc: f64,
    pub uc_threshold: f64,
    pub cc_threshold: f64,
    pub uc_pass: bool,
    pub cc_pass: bool,
    pub indicators: Vec<u8>,
}

impl Backtest {
    pub fn new(indicators: Vec<u8>, level: f64, test_level: f64) -> Result<Self> {
        let lr_uc = lr_unconditional(&indicators, level)?;
        let lr_cc = lr_conditional(&indicators, level)?;
        let uc_threshold = chi2_threshold(1, test_level);
        let cc_threshold = chi2_threshold(2, test_level);
        Ok(Self {
            level,
            test_level,
            lr_uc,
            lr_cc,
            uc_threshold,
            cc_threshold,
            uc_pass: lr_uc < uc_threshold,
            cc_pass: lr_cc < cc_threshold,
            indicators,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub days: usize,
    pub rmse: f64,
    pub mape: f64,
    /// Mean pinball loss at percentiles 1..=99.
    pub pinball: Vec<f64>,
    /// Mean Winkler score of central CIs at levels 1%..=99%.
    pub winkler: Vec<f64>,
    pub coverage: Vec<CoverageRow>,
    pub backtest: Backtest,
}

impl EvaluationReport {
    pub fn pinball_at(&self, percentile: usize) -> f64 {
        self.pinball[percentile - 1]
    }

    pub fn winkler_at(&self, percentile: usize) -> f64 {
        self.winkler[percentile - 1]
    }

    pub fn coverage_at(&self, level: f64) -> Option<f64> {
        self.coverage
            .iter()
            .find(|r| (r.level - level).abs() < 1e-12)
            .map(|r| r.coverage)
    }
}

/// Check that forecast and realized series cover the same days in order.
pub fn check_aligned(forecast: &[NaiveDate], realized: &[NaiveDate]) -> Result<()> {
    check_len(forecast.len(), realized.len())?;
    match forecast.iter().zip(realized).position(|(f, r)| f != r) {
        Some(row) => Err(Error::DateMismatch {
            row,
            forecast: forecast[row],
            realized: realized[row],
        }),
        None => Ok(()),
    }
}

pub const PERCENTILES: std::ops::RangeInclusive<usize> = 1..=99;

pub fn evaluate(
    model: ModelKind,
    forecast: &DensityForecast,
    realized: &[f64],
    settings: &EvaluationSettings,
) -> Result<EvaluationReport> {
    validate_levels(&settings.levels)?;
    check_unit(settings.backtest_level)?;
    check_unit(settings.test_level)?;
    check_len(forecast.len(), realized.len())?;
    let (rmse, mape) = rmse_mape(&forecast.points(settings.point), realized)?;

    let pinball_curve = PERCENTILES
        .map(|p| {
            pinball(
                &forecast.quantiles(p as f64 / 100.0),
                realized,
                p as f64 / 100.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let winkler_curve = PERCENTILES
        .map(|p| {
            let q = p as f64 / 100.0;
            let (lo, hi) = forecast.intervals(q);
            winkler(&lo, &hi, realized, q)
        })
        .collect::<Result<Vec<_>>>()?;

    let coverage = settings
        .levels
        .iter()
        .map(|&level| {
            let (lo, hi) = forecast.intervals(level);
            let c = coverage_indicator(&lo, &hi, realized)?;
            let hits: usize = c.indicators.iter().map(|&i| i as usize).sum();
            Ok(CoverageRow {
                level,
                coverage: c.coverage,
                violations: c.indicators.len() - hits,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (lo, hi) = forecast.intervals(settings.backtest_level);
    let indicators = coverage_indicator(&lo, &hi, realized)?.indicators;
    let backtest = Backtest::new(indicators, settings.backtest_level, settings.test_level)?;

    Ok(EvaluationReport {
        model,
        days: realized.len(),
        rmse,
        mape,
        pinball: pinball_curve,
        winkler: winkler_curve,
        coverage,
        backtest,
    })
}

fn csv_err(e: std::io::Error) -> Error {
    Error::io("<report csv>", e)
}

/// `metric,percentile,<model>...` rows for the pinball and Winkler curves.
pub fn write_curves_csv(reports: &[EvaluationReport], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["metric".to_string(), "percentile".to_string()];
    header.extend(reports.iter().map(|r| r.model.name().to_string()));
    w.write_record(&header)?;
    for (metric, pick) in [
        (
            "pinball",
            (|r: &EvaluationReport, p| r.pinball_at(p)) as fn(&EvaluationReport, usize) -> f64,
        ),
        ("winkler", |r: &EvaluationReport, p| r.winkler_at(p)),
    ] {
        for p in PERCENTILES {
            let mut row = vec![metric.to_string(), p.to_string()];
            row.extend(reports.iter().map(|r| pick(r, p).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// `level,<model>...` rows of empirical coverage.
pub fn write_coverage_csv(reports: &[EvaluationReport], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["level".to_string()];
    header.extend(reports.iter().map(|r| r.model.name().to_string()));
    w.write_record(&header)?;
    let Some(first) = reports.first() else {
        return w.flush().map_err(csv_err);
    };
    for (k, row) in first.coverage.iter().enumerate() {
        let mut out = vec![level_label(row.level)];
        for r in reports {
            let c = r
                .coverage
                .get(k)
                .filter(|c| c.level == row.level)
                .ok_or_else(|| {
                    Error::InvalidParameter("reports were evaluated at different levels".into())
                })?;
            out.push(c.coverage.to_string());
        }
        w.write_record(&out)?;
    }
    w.flush().map_err(csv_err)
}

/// Side-by-side summary mirroring an accuracy / coverage / backtest table.
pub fn write_comparison_csv(reports: &[EvaluationReport], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["statistic".to_string()];
    header.extend(reports.iter().map(|r| r.model.name().to_string()));
    header.push("threshold".into());
    w.write_record(&header)?;
    let mut emit = |name: String, f: &dyn Fn(&EvaluationReport) -> f64, threshold: String| {
        let mut row = vec![name];
        row.extend(reports.iter().map(|r| f(r).to_string()));
        row.push(threshold);
        w.write_record(&row)
    };
    emit("rmse".into(), &|r| r.rmse, String::new())?;
    emit("mape".into(), &|r| r.mape, String::new())?;
    if let Some(first) = reports.first() {
        for (k, row) in first.coverage.iter().enumerate() {
            emit(
                format!("coverage_{}", level_label(row.level)),
                &|r| r.coverage[k].coverage,
                String::new(),
            )?;
        }
        let bt = &first.backtest;
        emit(
            "lr_uc".into(),
            &|r| r.backtest.lr_uc,
            bt.uc_threshold.to_string(),
        )?;
        emit(
            "lr_cc".into(),
            &|r| r.backtest.lr_cc,
            bt.cc_threshold.to_string(),
        )?;
    }
    w.flush().map_err(csv_err)
}

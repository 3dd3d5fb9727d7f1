//! Deterministic part of the hybrid model: trend, yearly and weekly
//! seasonality and an AR(1) term on log-consumption, fitted by OLS.
//!
//! ```text
//! Y_t = b0 + b1 t + b2 cos(wt) + b3 sin(wt) + b4 Sat_t + b5 Sun_t + gamma Y_{t-1} + R_t
//! ```

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{self, CalendarDay, DailyPanel};
use crate::error::{check_len, Error, Result};

pub const TIME_EFFECT_COLUMNS: [&str; 6] = [
    "intercept",
    "trend",
    "cos_year",
    "sin_year",
    "saturday",
    "sunday",
];
pub const AR_COLUMN: &str = "ar1";

/// Default outlier threshold in robust standard deviations.
pub const OUTLIER_K: f64 = 3.0;

pub fn time_effect_row(cal: &CalendarDay) -> [f64; 6] {
    [
        1.0,
        cal.t as f64,
        cal.cos(),
        cal.sin(),
        f64::from(u8::from(cal.is_saturday())),
        f64::from(u8::from(cal.is_sunday())),
    ]
}

/// Regression design over a panel. `rows[k]` is the panel row behind design row `k`.
#[derive(Debug, Clone)]
pub struct Design {
    pub columns: Vec<String>,
    pub x: Mat<f64>,
    pub rows: Vec<usize>,
}

impl Design {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    /// Keep only the design rows whose panel row satisfies `keep`.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Design {
        let kept: Vec<usize> = (0..self.rows.len())
            .filter(|&k| keep(self.rows[k]))
            .collect();
        Design {
            columns: self.columns.clone(),
            x: Mat::from_fn(kept.len(), self.x.ncols(), |i, j| self.x[(kept[i], j)]),
            rows: kept.iter().map(|&k| self.rows[k]).collect(),
        }
    }

    /// Append extra columns; `value(panel_row, j)` supplies column `j` of `names`.
    pub fn with_columns(&self, names: &[&str], value: impl Fn(usize, usize) -> f64) -> Design {
        let p = self.x.ncols();
        let mut columns = self.columns.clone();
        columns.extend(names.iter().map(|s| s.to_string()));
        Design {
            columns,
            x: Mat::from_fn(self.nrows(), p + names.len(), |i, j| {
                if j < p {
                    self.x[(i, j)]
                } else {
                    value(self.rows[i], j - p)
                }
            }),
            rows: self.rows.clone(),
        }
    }
}

/// Columns `[1, t, cos wt, sin wt, D_Sat, D_Sun]` and optionally the lagged
/// log-consumption. With the lag, panel row 0 has no design row.
pub fn design_matrix(panel: &DailyPanel, include_ar: bool) -> Design {
    let log_y = panel.log_consumption();
    let first = usize::from(include_ar);
    let rows: Vec<usize> = (first..panel.len()).collect();
    let p = 6 + usize::from(include_ar);
    let x = Mat::from_fn(rows.len(), p, |i, j| {
        let r = rows[i];
        if j < 6 {
            time_effect_row(&panel.calendar(r))[j]
        } else {
            log_y[r - 1]
        }
    });
    let mut columns: Vec<String> = TIME_EFFECT_COLUMNS.iter().map(|s| s.to_string()).collect();
    if include_ar {
        columns.push(AR_COLUMN.to_string());
    }
    Design { columns, x, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// `rss / (rows - columns)`
    pub residual_variance: f64,
    pub dof: usize,
}

/// Ordinary least squares through a Householder QR of `x`.
///
/// A column whose component orthogonal to the preceding columns is below
/// `1e-10` of its norm is reported as rank deficient.
pub fn fit_ols(x: MatRef<'_, f64>, y: &[f64], columns: &[String]) -> Result<OlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    check_len(n, y.len())?;
    check_len(p, columns.len())?;
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "OLS with {p} columns needs more than {p} rows, got {n}"
        )));
    }
    let qr = x.qr();
    let r = qr.thin_R();
    for j in 0..p {
        let norm = x.col(j).norm_l2();
        if !(r[(j, j)].abs() > 1e-10 * norm.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient {
                column: columns[j].clone(),
            });
        }
    }
    let q = qr.compute_thin_Q();
    let yv = Mat::from_fn(n, 1, |i, _| y[i]);
    let mut beta = q.transpose() * &yv;
    r.solve_upper_triangular_in_place(beta.as_mut());

    let fitted = x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[(i, 0)]).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let dof = n - p;
    let residual_variance = rss / dof as f64;

    // (X'X)^-1 = R^-1 R^-T; diagonal is the squared row norms of R^-1.
    let mut r_inv = Mat::<f64>::identity(p, p);
    r.solve_upper_triangular_in_place(r_inv.as_mut());
    let standard_errors = (0..p)
        .map(|i| {
            let row_sq: f64 = (0..p).map(|j| r_inv[(i, j)].powi(2)).sum();
            (residual_variance * row_sq).sqrt()
        })
        .collect();

    Ok(OlsFit {
        coefficients: (0..p).map(|i| beta[(i, 0)]).collect(),
        standard_errors,
        residuals,
        rss,
        residual_variance,
        dof,
    })
}

/// Named GLM coefficients. `gamma` is the AR(1) coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmCoefficients {
    pub intercept: f64,
    pub trend: f64,
    pub cos_year: f64,
    pub sin_year: f64,
    pub saturday: f64,
    pub sunday: f64,
    pub gamma: f64,
}

impl GlmCoefficients {
    pub const NAMES: [&'static str; 7] = [
        "intercept",
        "trend",
        "cos_year",
        "sin_year",
        "saturday",
        "sunday",
        "gamma",
    ];

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            intercept: v[0],
            trend: v[1],
            cos_year: v[2],
            sin_year: v[3],
            saturday: v[4],
            sunday: v[5],
            gamma: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.intercept,
            self.trend,
            self.cos_year,
            self.sin_year,
            self.saturday,
            self.sunday,
            self.gamma,
        ]
    }

    /// Trend plus seasonality `T_t + S_t`.
    pub fn time_effect(&self, cal: &CalendarDay) -> f64 {
        let row = time_effect_row(cal);
        let b = self.to_array();
        row.iter().zip(&b[..6]).map(|(x, b)| x * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub coefficients: GlmCoefficients,
    pub standard_errors: GlmCoefficients,
    pub rss: f64,
    pub residual_variance: f64,
    /// Observations used by the final OLS (outliers and the first row excluded).
    pub n_obs: usize,
    /// `R_t` for panel rows `1..n`, outliers included.
    #[serde(default, skip_serializing)]
    pub residuals: Vec<f64>,
}

impl GlmParams {
    pub fn gamma(&self) -> f64 {
        self.coefficients.gamma
    }
}

/// Residuals `Y_t - T_t - S_t - gamma Y_{t-1}` for panel rows `1..n`.
pub fn glm_residuals(coefficients: &GlmCoefficients, panel: &DailyPanel) -> Vec<f64> {
    let log_y = panel.log_consumption();
    (1..panel.len())
        .map(|i| {
            log_y[i]
                - coefficients.time_effect(&panel.calendar(i))
                - coefficients.gamma * log_y[i - 1]
        })
        .collect()
}

/// Sample ACF/PACF with the white-noise band `±1.96/sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    pub band: f64,
}

pub fn acf_pacf(series: &[f64], max_lag: usize) -> Result<Correlogram> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::InsufficientData(format!(
            "series of length {n} for {max_lag} lags"
        )));
    }
    let band = 1.96 / (n as f64).sqrt();
    let m = crate::stats::mean(series);
    let c0: f64 = series.iter().map(|x| (x - m).powi(2)).sum();
    if !(c0 > 0.0) {
        log::warn!("ACF of a constant series is undefined; returning zeros");
        return Ok(Correlogram {
            acf: vec![0.0; max_lag],
            pacf: vec![0.0; max_lag],
            band,
        });
    }
    let acf: Vec<f64> = (1..=max_lag)
        .map(|k| {
            (0..n - k)
                .map(|t| (series[t] - m) * (series[t + k] - m))
                .sum::<f64>()
                / c0
        })
        .collect();

    // Durbin-Levinson
    let mut pacf = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = acf[k - 1] - (1..k).map(|j| phi[j - 1] * acf[k - j - 1]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * acf[j - 1]).sum::<f64>();
        let phi_kk = if den.abs() > 0.0 { num / den } else { 0.0 };
        let mut next: Vec<f64> = (1..k)
            .map(|j| phi[j - 1] - phi_kk * phi[k - j - 1])
            .collect();
        next.push(phi_kk);
        phi = next;
        pacf.push(phi_kk);
    }
    Ok(Correlogram { acf, pacf, band })
}

/// Iterated seasonal-fit outlier detection: fit the time effects by OLS on
/// the unflagged rows, flag residuals beyond `k` robust std, refit, repeat
/// until the flagged set stops changing.
pub fn flag_outliers(panel: &DailyPanel, k: f64) -> Result<Vec<usize>> {
    let design = design_matrix(panel, false);
    let log_y = panel.log_consumption();
    let mut flagged: Vec<usize> = Vec::new();
    for _ in 0..50 {
        let kept = design.filter_rows(|r| flagged.binary_search(&r).is_err());
        let y: Vec<f64> = kept.rows.iter().map(|&r| log_y[r]).collect();
        let fit = fit_ols(kept.x.as_ref(), &y, &kept.columns)?;
        let beta = Mat::from_fn(fit.coefficients.len(), 1, |i, _| fit.coefficients[i]);
        let seasonal = &design.x * &beta;
        let seasonal: Vec<f64> = (0..panel.len()).map(|i| seasonal[(i, 0)]).collect();
        let next = data::detect_outliers(&log_y, &seasonal, k)?;
        if next == flagged {
            return Ok(flagged);
        }
        flagged = next;
    }
    log::warn!("outlier detection did not reach a fixpoint in 50 refits");
    Ok(flagged)
}

/// Output of the three-step calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmCalibration {
    pub params: GlmParams,
    /// Step 1: time effects only.
    pub time_effects: OlsFit,
    /// Step 2: correlogram of the step-1 residuals.
    pub correlogram: Correlogram,
    pub outliers: Vec<usize>,
}

pub const CORRELOGRAM_LAGS: usize = 20;

/// Three-step IS calibration. `outliers` (panel rows, sorted) are left out of
/// both regressions but stay in the lag column of their successors.
pub fn calibrate_glm(panel: &DailyPanel, outliers: &[usize]) -> Result<GlmCalibration> {
    if panel.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "GLM calibration on {} rows",
            panel.len()
        )));
    }
    let log_y = panel.log_consumption();
    let keep = |r: usize| outliers.binary_search(&r).is_err();

    let step1 = design_matrix(panel, false).filter_rows(keep);
    let y1: Vec<f64> = step1.rows.iter().map(|&r| log_y[r]).collect();
    let time_effects = fit_ols(step1.x.as_ref(), &y1, &step1.columns)?;

    let lags = CORRELOGRAM_LAGS.min(time_effects.residuals.len().saturating_sub(1));
    let correlogram = acf_pacf(&time_effects.residuals, lags)?;

    let step3 = design_matrix(panel, true).filter_rows(keep);
    let y3: Vec<f64> = step3.rows.iter().map(|&r| log_y[r]).collect();
    let fit = fit_ols(step3.x.as_ref(), &y3, &step3.columns)?;

    let coefficients = GlmCoefficients::from_slice(&fit.coefficients);
    if coefficients.gamma.abs() >= 1.0 {
        log::warn!(
            "fitted AR coefficient {} is not stationary",
            coefficients.gamma
        );
    }
    let params = GlmParams {
        coefficients,
        standard_errors: GlmCoefficients::from_slice(&fit.standard_errors),
        rss: fit.rss,
        residual_variance: fit.residual_variance,
        n_obs: y3.len(),
        residuals: glm_residuals(&coefficients, panel),
    };
    Ok(GlmCalibration {
        params,
        time_effects,
        correlogram,
        outliers: outliers.to_vec(),
    })
}

/// Significance stars at the 1%/5%/10% levels.
pub fn stars(p_value: f64) -> &'static str {
    if p_value < 0.01 {
        "***"
    } else if p_value < 0.05 {
        "**"
    } else if p_value < 0.10 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub significance: String,
}

/// JSON fit report; parameters are labelled by name, not by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmReport {
    pub parameters: Vec<ParameterRow>,
    pub rss: f64,
    pub residual_variance: f64,
    pub n_obs: usize,
    pub gamma_stationary: bool,
    pub outlier_rows: Vec<usize>,
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
    pub acf_band: f64,
}

impl GlmReport {
    pub fn new(cal: &GlmCalibration) -> Self {
        let p = &cal.params;
        let dof = (p.n_obs - GlmCoefficients::NAMES.len()) as f64;
        let t_dist = StudentsT::new(0.0, 1.0, dof).ok();
        let est = p.coefficients.to_array();
        let se = p.standard_errors.to_array();
        let parameters = GlmCoefficients::NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let t_stat = est[i] / se[i];
                let p_value = match &t_dist {
                    Some(t) => 2.0 * (1.0 - t.cdf(t_stat.abs())),
                    None => f64::NAN,
                };
                ParameterRow {
                    name: name.to_string(),
                    estimate: est[i],
                    standard_error: se[i],
                    t_stat,
                    p_value,
                    significance: stars(p_value).to_string(),
                }
            })
            .collect();
        Self {
            parameters,
            rss: p.rss,
            residual_variance: p.residual_variance,
            n_obs: p.n_obs,
            gamma_stationary: p.coefficients.gamma.abs() < 1.0,
            outlier_rows: cal.outliers.clone(),
            acf: cal.correlogram.acf.clone(),
            pacf: cal.correlogram.pacf.clone(),
            acf_band: cal.correlogram.band,
        }
    }
}

//! Density forecasts of out-of-sample log-consumption.
//!
//! Given the GLM coefficients and the GP posterior of the OS residuals, each
//! OS day is Gaussian in log space. The mean follows the AR(1) recursion
//! seeded with the last realized in-sample value; the variance adds the
//! posterior residual covariances discounted by powers of `gamma`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::CalendarDay;
use crate::error::{check_len, Error, Result};
use crate::glm::GlmCoefficients;
use crate::gp::GpPosterior;
use crate::seed;
use crate::stats;

/// Tolerance below zero within which a computed variance is clamped to 0.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;

pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// `Ybar_{n+1} = T+S + gamma*y_n + Rbar_{n+1}`, then recursively on `Ybar`.
pub fn forecast_mean(
    coefficients: &GlmCoefficients,
    calendars: &[CalendarDay],
    residual_mean: &[f64],
    y_n: f64,
) -> Result<Vec<f64>> {
    check_len(calendars.len(), residual_mean.len())?;
    let mut prev = y_n;
    Ok(calendars
        .iter()
        .zip(residual_mean)
        .map(|(cal, r)| {
            prev = coefficients.time_effect(cal) + coefficients.gamma * prev + r;
            prev
        })
        .collect())
}

/// `var Y_{n+i} = var R_{n+i} + gamma^2 var Y_{n+i-1} + 2 sum_j gamma^j cov(R_{n+i}, R_{n+i-j})`.
///
/// Covariances with in-sample residuals are zero: those are known.
pub fn forecast_variance(gamma: f64, covariance: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let m = covariance.nrows();
    if covariance.ncols() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: covariance.ncols(),
        });
    }
    let mut out = Vec::with_capacity(m);
    let mut prev = 0.0;
    for i in 0..m {
        let mut cross = 0.0;
        let mut g = 1.0;
        for j in 1..=i {
            g *= gamma;
            cross += g * covariance[(i, i - j)];
        }
        let mut v = covariance[(i, i)] + gamma * gamma * prev + 2.0 * cross;
        if v < 0.0 {
            if v < -NEGATIVE_VARIANCE_TOL {
                return Err(Error::NegativeVariance { day: i, value: v });
            }
            log::warn!("clamping variance {v:e} to 0 on OS day {i}");
            v = 0.0;
        }
        out.push(v);
        prev = v;
    }
    Ok(out)
}

/// Variance path for i.i.d. residuals of variance `v`: `v (1 - gamma^(2i)) / (1 - gamma^2)`,
/// computed by the same recursion.
pub fn ar1_variance(gamma: f64, v: f64, horizon: usize) -> Vec<f64> {
    let mut prev = 0.0;
    (0..horizon)
        .map(|_| {
            prev = v + gamma * gamma * prev;
            prev
        })
        .collect()
}

/// Which functional of the lognormal is reported as the MWh point forecast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointForecast {
    /// `exp(Ybar)`
    #[default]
    Median,
    /// `exp(Ybar + s^2/2)`
    Mean,
}

/// Per-day Gaussian densities of log-consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityForecast {
    pub dates: Vec<NaiveDate>,
    pub log_mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DensityForecast {
    pub fn new(dates: Vec<NaiveDate>, log_mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        check_len(dates.len(), log_mean.len())?;
        check_len(dates.len(), log_var.len())?;
        if let Some((day, &value)) = log_var.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeVariance { day, value });
        }
        Ok(Self {
            dates,
            log_mean,
            log_var,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn std_dev(&self, day: usize) -> f64 {
        self.log_var[day].sqrt()
    }

    pub fn point(&self, day: usize, kind: PointForecast) -> f64 {
        match kind {
            PointForecast::Median => self.log_mean[day].exp(),
            PointForecast::Mean => (self.log_mean[day] + 0.5 * self.log_var[day]).exp(),
        }
    }

    pub fn points(&self, kind: PointForecast) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i, kind)).collect()
    }

    /// Quantile `q` of day `day` in MWh.
    pub fn quantile(&self, day: usize, q: f64) -> f64 {
        (self.log_mean[day] + stats::normal_quantile(q) * self.std_dev(day)).exp()
    }

    pub fn quantiles(&self, q: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.quantile(i, q)).collect()
    }

    /// Central `level` interval of day `day` in MWh.
    pub fn interval(&self, day: usize, level: f64) -> (f64, f64) {
        let half = stats::central_z(level) * self.std_dev(day);
        (
            (self.log_mean[day] - half).exp(),
            (self.log_mean[day] + half).exp(),
        )
    }

    pub fn intervals(&self, level: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.len()).map(|i| self.interval(i, level)).unzip()
    }
}

/// Combine the GLM and the residual posterior into OS densities.
pub fn density_forecast(
    coefficients: &GlmCoefficients,
    posterior: &GpPosterior,
    calendars: &[CalendarDay],
    dates: Vec<NaiveDate>,
    y_n: f64,
) -> Result<DensityForecast> {
    let log_mean = forecast_mean(coefficients, calendars, &posterior.mean, y_n)?;
    let log_var = forecast_variance(coefficients.gamma, posterior.covariance.as_ref())?;
    DensityForecast::new(dates, log_mean, log_var)
}

pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no CI levels given".into()));
    }
    for w in levels.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(format!(
                "CI levels must be strictly increasing, got {levels:?}"
            )));
        }
    }
    match levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        Some(l) => Err(Error::InvalidParameter(format!(
            "CI level {l} outside (0, 1)"
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedDay {
    pub date: NaiveDate,
    pub point_mwh: f64,
    /// `(lower, upper)` per level, in the order of [`BandedForecast::levels`].
    pub bands: Vec<(f64, f64)>,
    pub log_mean: f64,
    pub log_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedForecast {
    pub levels: Vec<f64>,
    pub point: PointForecast,
    pub days: Vec<BandedDay>,
}

pub fn to_consumption_units(
    forecast: &DensityForecast,
    levels: &[f64],
    point: PointForecast,
) -> Result<BandedForecast> {
    validate_levels(levels)?;
    let days = (0..forecast.len())
        .map(|i| BandedDay {
            date: forecast.dates[i],
            point_mwh: forecast.point(i, point),
            bands: levels.iter().map(|&l| forecast.interval(i, l)).collect(),
            log_mean: forecast.log_mean[i],
            log_var: forecast.log_var[i],
        })
        .collect();
    Ok(BandedForecast {
        levels: levels.to_vec(),
        point,
        days,
    })
}

/// `0.95 -> "95"`, `0.975 -> "97.5"`.
pub fn level_label(level: f64) -> String {
    let pct = level * 100.0;
    let rounded = (pct * 1e6).round() / 1e6;
    format!("{rounded}")
}

pub fn forecast_header(levels: &[f64]) -> Vec<String> {
    let mut h = vec!["date".to_string(), "point_mwh".to_string()];
    for &l in levels {
        let tag = level_label(l);
        h.push(format!("lo_{tag}"));
        h.push(format!("hi_{tag}"));
    }
    h.push("log_mean".into());
    h.push("log_var".into());
    h
}

pub fn write_forecast_csv(banded: &BandedForecast, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(forecast_header(&banded.levels))?;
    for d in &banded.days {
        let mut row = vec![d.date.to_string(), d.point_mwh.to_string()];
        for (lo, hi) in &d.bands {
            row.push(lo.to_string());
            row.push(hi.to_string());
        }
        row.push(d.log_mean.to_string());
        row.push(d.log_var.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}

pub fn save_forecast_csv(banded: &BandedForecast, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_forecast_csv(banded, std::io::BufWriter::new(file))
}

/// Read back the densities from a forecast CSV (only `date`, `log_mean` and
/// `log_var` are needed; the bands are derived quantities).
pub fn read_forecast_csv(reader: impl Read) -> Result<DensityForecast> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (c_date, c_mean, c_var) = (col("date")?, col("log_mean")?, col("log_var")?);
    let mut dates = Vec::new();
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize, name: &str| -> Result<&str> {
            rec.get(c).ok_or_else(|| Error::Parse {
                row,
                field: name.into(),
                message: "missing value".into(),
            })
        };
        let num = |c: usize, name: &str| -> Result<f64> {
            field(c, name)?.trim().parse().map_err(|e| Error::Parse {
                row,
                field: name.into(),
                message: format!("{e}"),
            })
        };
        dates.push(
            NaiveDate::parse_from_str(field(c_date, "date")?.trim(), "%Y-%m-%d").map_err(|e| {
                Error::Parse {
                    row,
                    field: "date".into(),
                    message: format!("{e}"),
                }
            })?,
        );
        mean.push(num(c_mean, "log_mean")?);
        var.push(num(c_var, "log_var")?);
    }
    DensityForecast::new(dates, mean, var)
}

pub fn load_forecast_csv(path: impl AsRef<Path>) -> Result<DensityForecast> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_forecast_csv(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloMoments {
    pub paths: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

const MC_CHUNK: usize = 4096;

/// Symmetric square root `U sqrt(max(lambda, 0))` of a PSD matrix.
fn psd_root(cov: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let eig = cov
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let u = eig.U();
    let s = eig.S();
    let m = cov.nrows();
    Ok(Mat::from_fn(m, m, |i, j| u[(i, j)] * s[j].max(0.0).sqrt()))
}

/// Simulate `paths` joint draws of the OS residuals from the posterior, roll
/// each through the model from `y_n`, and return per-day sample moments.
///
/// Paths are generated in fixed-size chunks, each with its own RNG stream, so
/// the result is the same regardless of thread count.
pub fn monte_carlo_check(
    coefficients: &GlmCoefficients,
    calendars: &[CalendarDay],
    posterior: &GpPosterior,
    y_n: f64,
    paths: usize,
    seed: u64,
) -> Result<MonteCarloMoments> {
    let m = posterior.len();
    check_len(m, calendars.len())?;
    if paths < 2 {
        return Err(Error::InvalidParameter(
            "monte carlo needs at least 2 paths".into(),
        ));
    }
    let root = psd_root(posterior.covariance.as_ref())?;
    let effects: Vec<f64> = calendars
        .iter()
        .map(|c| coefficients.time_effect(c))
        .collect();
    // shift by the analytic mean path to keep the sums well conditioned
    let shift = forecast_mean(coefficients, calendars, &posterior.mean, y_n)?;
    let gamma = coefficients.gamma;

    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..paths.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng_for_index(seed, "forecast-monte-carlo", c as u64);
            let count = MC_CHUNK.min(paths - c * MC_CHUNK);
            let mut s1 = vec![0.0; m];
            let mut s2 = vec![0.0; m];
            let mut z = vec![0.0; m];
            for _ in 0..count {
                z.iter_mut()
                    .for_each(|v| *v = StandardNormal.sample(&mut rng));
                let mut prev = y_n;
                for i in 0..m {
                    let r: f64 =
                        posterior.mean[i] + (0..m).map(|k| root[(i, k)] * z[k]).sum::<f64>();
                    let y = effects[i] + gamma * prev + r;
                    let d = y - shift[i];
                    s1[i] += d;
                    s2[i] += d * d;
                    prev = y;
                }
            }
            (s1, s2)
        })
        .collect();

    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    for (a, b) in &chunks {
        for i in 0..m {
            s1[i] += a[i];
            s2[i] += b[i];
        }
    }
    let n = paths as f64;
    let mean = (0..m).map(|i| shift[i] + s1[i] / n).collect();
    let variance = (0..m)
        .map(|i| (s2[i] - s1[i] * s1[i] / n) / (n - 1.0))
        .collect();
    Ok(MonteCarloMoments {
        paths,
        mean,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Datelike;

    fn cal(t: u32) -> CalendarDay {
        let date = NaiveDate::from_ymd_opt(2016, 4, 1).unwrap() + chrono::Days::new(t as u64);
        CalendarDay::new(t, date)
    }

    fn constant_effect(c: f64, gamma: f64) -> GlmCoefficients {
        GlmCoefficients {
            intercept: c,
            trend: 0.0,
            cos_year: 0.0,
            sin_year: 0.0,
            saturday: 0.0,
            sunday: 0.0,
            gamma,
        }
    }

    #[test]
    fn geometric_mean_path() {
        let coef = constant_effect(1.3, 0.8);
        let cals: Vec<_> = (1..=12).map(cal).collect();
        let m = forecast_mean(&coef, &cals, &[0.0; 12], 0.0).unwrap();
        for (i, v) in m.iter().enumerate() {
            let k = (i + 1) as i32;
            assert!((v - 1.3 * (1.0 - 0.8f64.powi(k)) / 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn decoupled_mean() {
        let coef = GlmCoefficients {
            intercept: 6.0,
            trend: -4e-5,
            cos_year: 0.1,
            sin_year: 0.03,
            saturday: -0.02,
            sunday: -0.05,
            gamma: 0.0,
        };
        let cals: Vec<_> = (700..710).map(cal).collect();
        let m = forecast_mean(&coef, &cals, &[0.0; 10], 9.0).unwrap();
        for (c, v) in cals.iter().zip(&m) {
            assert_eq!(*v, coef.time_effect(c));
        }
    }

    #[test]
    fn ar1_variance_formula() {
        let (v, g) = (0.04, 0.7);
        let cov = Mat::from_fn(15, 15, |i, j| if i == j { v } else { 0.0 });
        let var = forecast_variance(g, cov.as_ref()).unwrap();
        for (i, x) in var.iter().enumerate() {
            let k = (i + 1) as i32;
            let want = v * (1.0 - g.powi(2 * k)) / (1.0 - g * g);
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_negative_variance_clamped() {
        let cov = Mat::from_fn(1, 1, |_, _| -1e-13);
        assert_eq!(forecast_variance(0.5, cov.as_ref()).unwrap(), vec![0.0]);
        let cov = Mat::from_fn(1, 1, |_, _| -1e-6);
        assert!(matches!(
            forecast_variance(0.5, cov.as_ref()),
            Err(Error::NegativeVariance { .. })
        ));
    }

    #[test]
    fn standard_normal_band() {
        let d = NaiveDate::from_ymd_opt(2017, 1, 2).unwrap();
        let fc = DensityForecast::new(vec![d], vec![0.0], vec![1.0]).unwrap();
        let (lo, hi) = fc.interval(0, 0.95);
        assert!((lo - (-1.959963984540054f64).exp()).abs() < 1e-12);
        assert!((hi - 1.959963984540054f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_width_band() {
        let d = NaiveDate::from_ymd_opt(2017, 1, 2).unwrap();
        let fc = DensityForecast::new(vec![d], vec![6.2], vec![0.0]).unwrap();
        let b = to_consumption_units(&fc, &DEFAULT_LEVELS, PointForecast::Median).unwrap();
        for (lo, hi) in &b.days[0].bands {
            assert_eq!(*lo, b.days[0].point_mwh);
            assert_eq!(*hi, b.days[0].point_mwh);
        }
    }

    #[test]
    fn level_validation_and_labels() {
        assert!(validate_levels(&[0.9, 0.95, 0.99]).is_ok());
        assert!(validate_levels(&[0.95, 0.9]).is_err());
        assert!(validate_levels(&[1.0]).is_err());
        assert!(validate_levels(&[]).is_err());
        assert_eq!(level_label(0.9), "90");
        assert_eq!(level_label(0.975), "97.5");
        assert_eq!(
            forecast_header(&DEFAULT_LEVELS).join(","),
            "date,point_mwh,lo_90,hi_90,lo_95,hi_95,lo_99,hi_99,log_mean,log_var"
        );
    }

    #[test]
    fn csv_round_trip() {
        let dates: Vec<_> = (0..3)
            .map(|i| NaiveDate::from_ymd_opt(2016, 4, 1 + i).unwrap())
            .collect();
        let fc =
            DensityForecast::new(dates, vec![6.1, 6.2, 6.3], vec![0.001, 0.002, 0.0031]).unwrap();
        let b = to_consumption_units(&fc, &DEFAULT_LEVELS, PointForecast::Median).unwrap();
        let mut buf = Vec::new();
        write_forecast_csv(&b, &mut buf).unwrap();
        let back = read_forecast_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fc);
        assert_eq!(back.dates[2].day(), 3);
    }
}

//! Synthetic panels drawn from the hybrid model, used as ground truth.
//!
//! Weather: temperature is a yearly sinusoid plus AR(1) noise; the other
//! indicators are bounded noises (optionally persistent) and chill is derived
//! from temperature and wind. Residuals are drawn jointly from `N(0, H)` over
//! the whole horizon, with regressors standardized on the in-sample rows, and
//! log-consumption is rolled forward through the GLM recursion.

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    build_regressors, next_day, DailyPanel, DailyRecord, DateRange, RegressorMatrix, SplitSpec,
    Weather,
};
use crate::error::{Error, Result};
use crate::glm::GlmCoefficients;
use crate::gp::bootstrap::sample_gaussian;
use crate::gp::kernel::{add_diagonal, factorize, kernel_symmetric, pairwise_distances};
use crate::gp::GpParams;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherSettings {
    /// Yearly mean temperature, degrees C.
    pub temperature_mean: f64,
    /// Half the summer-winter swing, degrees C.
    pub temperature_amplitude: f64,
    pub temperature_ar: f64,
    /// Innovation std of the temperature noise.
    pub temperature_noise: f64,
    /// AR(1) coefficient of the latent noise behind the other indicators
    /// (0 makes them independent day to day).
    pub persistence: f64,
}

impl Default for WeatherSettings {
    fn default() -> Self {
        Self {
            temperature_mean: 10.0,
            temperature_amplitude: 6.5,
            temperature_ar: 0.7,
            temperature_noise: 2.0,
            persistence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub glm: GlmCoefficients,
    pub gp: GpParams,
    pub start: NaiveDate,
    pub n_in_sample: usize,
    pub n_out_of_sample: usize,
    #[serde(default)]
    pub weather: WeatherSettings,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Magnitudes of a two-year calibration on a regional daily load series.
    fn default() -> Self {
        Self {
            glm: GlmCoefficients {
                intercept: 1.17,
                trend: -4.36e-5,
                cos_year: 0.103,
                sin_year: 0.034,
                saturday: 0.022,
                sunday: 0.047,
                gamma: 0.819,
            },
            gp: GpParams {
                sigma: 5.17e-4,
                sigma_f: 5.1739e-2,
                sigma_l: 1.83622,
            },
            start: NaiveDate::from_ymd_opt(2014, 4, 1).expect("valid date"),
            n_in_sample: 730,
            n_out_of_sample: 365,
            weather: WeatherSettings::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let gp = &self.gp;
        if !(gp.sigma >= 0.0 && gp.sigma_f >= 0.0 && gp.sigma_l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "synthetic GP parameters must be non-negative with sigma_l > 0: {gp:?}"
            )));
        }
        if self.n_in_sample < 2 {
            return Err(Error::InvalidParameter(
                "need at least two in-sample days".into(),
            ));
        }
        if !(self.glm.gamma.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "synthetic gamma {} is not stationary",
                self.glm.gamma
            )));
        }
        let w = &self.weather;
        if !(w.temperature_ar.abs() < 1.0 && w.persistence.abs() < 1.0) {
            return Err(Error::InvalidParameter(
                "weather AR coefficients must be in (-1, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: DailyPanel,
    pub split: SplitSpec,
    /// True residual `R_t` of every row.
    pub residuals: Vec<f64>,
    pub regressors: RegressorMatrix,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Wind chill (degrees C) from temperature and wind speed in m/s.
fn wind_chill(t: f64, wind: f64) -> f64 {
    let v = (wind * 3.6).max(0.1).powf(0.16);
    13.12 + 0.6215 * t - 11.37 * v + 0.3965 * t * v
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn simulate_weather(
    dates: &[NaiveDate],
    w: &WeatherSettings,
    rng: &mut ChaCha8Rng,
) -> Vec<Weather> {
    let omega = 2.0 * std::f64::consts::PI / 365.0;
    let stationary = |phi: f64| (1.0 - phi * phi).sqrt();
    let mut temp_noise = gauss(rng) * w.temperature_noise / stationary(w.temperature_ar);
    let mut latent = [0.0f64; 5];
    latent.iter_mut().for_each(|z| *z = gauss(rng));
    let inno = stationary(w.persistence);
    dates
        .iter()
        .map(|d| {
            // coldest around mid-January
            let phase = omega * (d.ordinal0() as f64 - 15.0);
            temp_noise = w.temperature_ar * temp_noise + w.temperature_noise * gauss(rng);
            for z in latent.iter_mut() {
                *z = w.persistence * *z + inno * gauss(rng);
            }
            let temperature =
                w.temperature_mean - w.temperature_amplitude * phase.cos() + temp_noise;
            let wind = (1.4 + 0.4 * latent[0]).exp();
            let precipitation = (3.0 * latent[1] - 1.0).max(0.0) + 0.05 * rng.random::<f64>();
            let cloud_cover = 8.0 * logistic(0.6 + 1.2 * latent[2]);
            let daylight = 9000.0 - 6500.0 * phase.cos();
            let solar = daylight * (1.0 - 0.06 * cloud_cover) * (1.0 + 0.1 * latent[3]).max(0.2);
            let humidity = 100.0 * logistic(1.4 + 0.7 * latent[4]);
            [
                temperature,
                wind,
                precipitation,
                wind_chill(temperature, wind),
                solar,
                humidity,
                cloud_cover,
            ]
        })
        .collect()
}

/// Draw a panel of `n_in_sample + n_out_of_sample` consecutive days (Feb 29
/// skipped) from the model in `spec`.
pub fn simulate_panel(spec: &SyntheticSpec) -> Result<SyntheticPanel> {
    spec.validate()?;
    let total = spec.n_in_sample + spec.n_out_of_sample;
    let mut dates = Vec::with_capacity(total);
    let mut d = spec.start;
    if crate::data::is_leap_day(d) {
        d = next_day(d);
    }
    for _ in 0..total {
        dates.push(d);
        d = next_day(d);
    }

    let mut weather_rng = seed::rng_for(spec.seed, "synthetic-weather");
    let weather = simulate_weather(&dates, &spec.weather, &mut weather_rng);
    let placeholder: Vec<DailyRecord> = dates
        .iter()
        .zip(&weather)
        .map(|(&date, &w)| DailyRecord {
            date,
            consumption: 1.0,
            weather: w,
        })
        .collect();
    let skeleton = DailyPanel::new(placeholder)?;
    let regressors = build_regressors(&skeleton, 0..spec.n_in_sample)?;

    let residuals = if spec.gp.sigma_f == 0.0 && spec.gp.sigma == 0.0 {
        vec![0.0; total]
    } else {
        let mut h = kernel_symmetric(&pairwise_distances(&regressors.rows), &spec.gp);
        add_diagonal(&mut h, spec.gp.sigma * spec.gp.sigma);
        let factor = factorize(&h)?;
        let mut rng = seed::rng_for(spec.seed, "synthetic-residuals");
        let z: Vec<f64> = (0..total).map(|_| gauss(&mut rng)).collect();
        sample_gaussian(factor.llt.L(), &z)
    };

    let g = &spec.glm;
    let mut prev = (g.intercept + (g.saturday + g.sunday) / 7.0) / (1.0 - g.gamma);
    let records: Vec<DailyRecord> = (0..total)
        .map(|i| {
            let y = g.time_effect(&skeleton.calendar(i)) + g.gamma * prev + residuals[i];
            prev = y;
            DailyRecord {
                date: dates[i],
                consumption: y.exp(),
                weather: weather[i],
            }
        })
        .collect();
    let panel = DailyPanel::new(records)?;

    let n = spec.n_in_sample;
    let in_sample = DateRange::new(dates[0], dates[n - 1])?;
    let out_of_sample = if spec.n_out_of_sample > 0 {
        DateRange::new(dates[n], dates[total - 1])?
    } else {
        // degenerate split: a one-day OS range right after the IS range
        let d = next_day(dates[n - 1]);
        DateRange::new(d, d)?
    };
    Ok(SyntheticPanel {
        panel,
        split: SplitSpec::new(in_sample, out_of_sample)?,
        residuals,
        regressors,
    })
}

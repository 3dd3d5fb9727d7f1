#![allow(dead_code)]

use chrono::NaiveDate;
use gpx_core::data::{DailyPanel, DailyRecord, Regressors, N_REGRESSORS};
use gpx_core::glm::GlmCoefficients;
use gpx_core::gp::GpParams;
use gpx_core::simulate::SyntheticSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Regressors> {
    (0..n)
        .map(|_| {
            let mut x = [0.0; N_REGRESSORS];
            x.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            x
        })
        .collect()
}

/// Smooth, bounded, non-constant weather for day `i`.
pub fn weather(i: usize) -> [f64; 7] {
    let t = i as f64;
    [
        10.0 + 6.0 * (t * 0.0172).cos() + (t * 1.3).sin(),
        4.0 + (t * 0.7).sin(),
        1.0 + (t * 2.1).cos().abs(),
        -2.0 + (t * 0.31).sin(),
        120.0 + 40.0 * (t * 0.0172).sin() + 5.0 * (t * 0.9).cos(),
        70.0 + 15.0 * (t * 0.47).sin(),
        4.0 + 3.0 * (t * 0.23).cos(),
    ]
}

/// Panel from `start` with the given consumption values.
pub fn panel_from(start: &str, consumption: &[f64]) -> DailyPanel {
    let mut d = date(start);
    let records = consumption
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r = DailyRecord {
                date: d,
                consumption: c,
                weather: weather(i),
            };
            d = d.succ_opt().unwrap();
            r
        })
        .collect();
    DailyPanel::new(records).unwrap()
}

pub fn truth_glm() -> GlmCoefficients {
    SyntheticSpec::default().glm
}

/// Synthetic spec with a chosen GP truth and lengths.
pub fn spec(gp: GpParams, n: usize, n_star: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        gp,
        n_in_sample: n,
        n_out_of_sample: n_star,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

use faer::linalg::solvers::Llt;
use faer::{Mat, Side};

use super::GpParams;
use crate::data::Regressors;
use crate::error::{check_len, Error, Result};

/// Euclidean distance between two already-standardized regressor vectors.
pub fn sed(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    Ok(sed_unchecked(x, y))
}

#[inline]
pub(crate) fn sed_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Exponential kernel `sigma_f^2 exp(-sed(x, x') / sigma_l)`.
pub fn kernel_k(x: &Regressors, y: &Regressors, params: &GpParams) -> f64 {
    params.sigma_f * params.sigma_f * (-sed_unchecked(x, y) / params.sigma_l).exp()
}

pub fn pairwise_distances(x: &[Regressors]) -> Mat<f64> {
    let n = x.len();
    let mut d = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let v = sed_unchecked(&x[i], &x[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Distances between rows of `a` (matrix rows) and rows of `b` (matrix columns).
pub fn cross_distances(a: &[Regressors], b: &[Regressors]) -> Mat<f64> {
    Mat::from_fn(a.len(), b.len(), |i, j| sed_unchecked(&a[i], &b[j]))
}

/// `sigma_f^2 exp(-D / sigma_l)` elementwise.
pub(crate) fn kernel_from_distances(d: &Mat<f64>, params: &GpParams) -> Mat<f64> {
    let s2 = params.sigma_f * params.sigma_f;
    Mat::from_fn(d.nrows(), d.ncols(), |i, j| {
        s2 * (-d[(i, j)] / params.sigma_l).exp()
    })
}

/// Same as [`kernel_from_distances`] for a symmetric distance matrix,
/// evaluating one triangle only.
pub(crate) fn kernel_symmetric(d: &Mat<f64>, params: &GpParams) -> Mat<f64> {
    let s2 = params.sigma_f * params.sigma_f;
    let n = d.nrows();
    debug_assert_eq!(n, d.ncols());
    let mut k = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = s2 * (-d[(j, j)] / params.sigma_l).exp();
        for i in j + 1..n {
            let v = s2 * (-d[(i, j)] / params.sigma_l).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `H = K(X, X) + sigma^2 I`.
pub fn covariance_h(x: &[Regressors], params: &GpParams) -> Result<Mat<f64>> {
    params.validate()?;
    if x.is_empty() {
        return Err(Error::InsufficientData("covariance of an empty set".into()));
    }
    let mut h = kernel_symmetric(&pairwise_distances(x), params);
    add_diagonal(&mut h, params.sigma * params.sigma);
    Ok(h)
}

pub(crate) fn add_diagonal(m: &mut Mat<f64>, v: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += v;
    }
}

/// Cholesky factor of a covariance matrix plus the diagonal jitter it needed.
pub struct Factorized {
    pub llt: Llt<f64>,
    pub jitter: f64,
}

impl Factorized {
    pub fn n(&self) -> usize {
        self.llt.L().nrows()
    }

    /// `ln det` of the jittered matrix.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Cholesky with escalating jitter: none, then `1e-12 * trace/n` growing by
/// x10 up to `1e-6 * trace/n`.
pub fn factorize(h: &Mat<f64>) -> Result<Factorized> {
    if let Ok(llt) = h.llt(Side::Lower) {
        return Ok(Factorized { llt, jitter: 0.0 });
    }
    let n = h.nrows();
    let mean_diag = (0..n).map(|i| h[(i, i)]).sum::<f64>() / n as f64;
    let mut scale = 1e-12;
    let mut jitter = 0.0;
    while scale <= 1e-6 * (1.0 + 1e-9) {
        jitter = scale * mean_diag;
        let mut hj = h.clone();
        add_diagonal(&mut hj, jitter);
        if let Ok(llt) = hj.llt(Side::Lower) {
            log::debug!("covariance factorized with jitter {jitter:e}");
            return Ok(Factorized { llt, jitter });
        }
        scale *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter })
}

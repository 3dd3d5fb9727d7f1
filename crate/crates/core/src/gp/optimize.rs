//! Marginal-likelihood maximization in `theta = (ln sigma_f, ln sigma_l, ln sigma)`.
//!
//! Each iteration moves along an ascent direction with an adaptive step:
//! the step starts at `initial_step`, is halved while the likelihood does not
//! improve and grows by `grow` after every accepted move. The direction is
//! the raw gradient, the gradient preconditioned by the expected information
//! (Fisher scoring), or a Newton step with the observed information, which
//! falls back to Fisher scoring wherever the observed information is not
//! positive definite.

use serde::{Deserialize, Serialize};

use super::likelihood::{Evaluation, GpProblem};
use super::GpParams;
use crate::data::Regressors;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentDirection {
    Steepest,
    FisherScoring,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub direction: AscentDirection,
    pub initial_step: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Upper bound on the step multiplier.
    pub max_step: f64,
    /// Largest change of any log-parameter in one move.
    pub max_log_change: f64,
    pub min_step: f64,
    /// Convergence threshold on the gradient infinity-norm.
    pub tolerance: f64,
    /// Gradient threshold for coordinates without Fisher information, where
    /// a scale parameter sits at its lower boundary. Near that boundary the
    /// likelihood is quadratic in the scale, so the gain still available by
    /// moving further is about half this gradient.
    pub boundary_tolerance: f64,
    pub max_iterations: usize,
    /// Number of starts: the heuristic point plus points shifted by
    /// `+-restart_shift` on every log-coordinate.
    pub starts: usize,
    pub restart_shift: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            direction: AscentDirection::Newton,
            initial_step: 1.0,
            shrink: 0.5,
            grow: 1.5,
            max_step: 1.0,
            max_log_change: 3.0,
            min_step: 1e-10,
            tolerance: 1e-6,
            boundary_tolerance: 1e-3,
            max_iterations: 2000,
            starts: 3,
            restart_shift: 1.0,
        }
    }
}

impl OptimizerSettings {
    pub fn steepest() -> Self {
        Self {
            direction: AscentDirection::Steepest,
            max_step: 1e6,
            ..Self::default()
        }
    }

    pub fn single_start(&self) -> Self {
        Self {
            starts: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Gradient infinity-norm below tolerance.
    Converged,
    /// Converged on the informative coordinates with a scale parameter at its
    /// lower boundary.
    Boundary,
    /// No improving step above `min_step`; the point is optimal to rounding.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub start: usize,
    pub iteration: usize,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub sigma: f64,
    pub sigma_f: f64,
    pub sigma_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub initial: GpParams,
    pub initial_log_likelihood: Option<f64>,
    pub params: Option<GpParams>,
    pub log_likelihood: Option<f64>,
    pub iterations: usize,
    pub status: Option<FitStatus>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub params: GpParams,
    pub log_likelihood: f64,
    pub gradient: [f64; 3],
    pub iterations: usize,
    pub status: FitStatus,
    pub starts: Vec<StartSummary>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

/// `sigma_f = std(R)`, `sigma_l` = median pairwise distance, `sigma = 0.1 std(R)`.
pub fn heuristic_init(residuals: &[f64], x: &[Regressors]) -> GpParams {
    let sd = stats::sample_std(residuals).max(1e-12);
    let mut dists = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            dists.push(super::kernel::sed_unchecked(&x[i], &x[j]));
        }
    }
    let med = stats::median(&dists);
    GpParams {
        sigma: 0.1 * sd,
        sigma_f: sd,
        sigma_l: if med > 0.0 { med } else { 1.0 },
    }
}

/// Fit from the heuristic initialization (plus restarts per `opts.starts`).
pub fn fit_gp(residuals: &[f64], x: &[Regressors], opts: &OptimizerSettings) -> Result<GpFit> {
    let init = heuristic_init(residuals, x);
    fit_gp_from(residuals, x, &init, opts)
}

/// Fit from `init` and its shifted restarts; the best likelihood wins.
pub fn fit_gp_from(
    residuals: &[f64],
    x: &[Regressors],
    init: &GpParams,
    opts: &OptimizerSettings,
) -> Result<GpFit> {
    if residuals.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "GP fit needs at least 10 residuals, got {}",
            residuals.len()
        )));
    }
    init.validate()?;
    if init.sigma_f <= 0.0 {
        return Err(Error::InvalidParameter(
            "log-space optimization needs sigma_f > 0 at the start".into(),
        ));
    }
    let problem = GpProblem::new(residuals, x)?;
    let theta0 = init.to_theta();
    let shifts = [0.0, opts.restart_shift, -opts.restart_shift];

    let mut best: Option<GpFit> = None;
    let mut summaries = Vec::new();
    let mut trace = Vec::new();
    let mut last_err = None;
    for (start, shift) in shifts.iter().take(opts.starts.max(1)).enumerate() {
        let theta = theta0.map(|t| t + shift);
        let initial = GpParams::from_theta(&theta);
        let mut summary = StartSummary {
            start,
            initial,
            initial_log_likelihood: None,
            params: None,
            log_likelihood: None,
            iterations: 0,
            status: None,
            error: None,
        };
        match ascend(&problem, theta, opts, start, &mut trace) {
            Ok((fit, ll0)) => {
                summary.initial_log_likelihood = Some(ll0);
                summary.params = Some(fit.params);
                summary.log_likelihood = Some(fit.log_likelihood);
                summary.iterations = fit.iterations;
                summary.status = Some(fit.status);
                if best
                    .as_ref()
                    .is_none_or(|b| fit.log_likelihood > b.log_likelihood)
                {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::debug!("GP start {start} failed: {e}");
                summary.error = Some(e.to_string());
                last_err = Some(e);
            }
        }
        summaries.push(summary);
    }
    match best {
        Some(mut fit) => {
            fit.starts = summaries;
            fit.trace = trace;
            Ok(fit)
        }
        None => Err(last_err.unwrap_or_else(|| Error::Optimizer("no start succeeded".into()))),
    }
}

fn inf_norm(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn direction(eval: &Evaluation, kind: AscentDirection) -> [f64; 3] {
    let g = eval.gradient.expect("gradient evaluated");
    match (kind, eval.fisher) {
        (AscentDirection::FisherScoring, Some(f)) => solve_fisher(f, g).unwrap_or(g),
        (AscentDirection::Newton, Some(f)) => eval
            .observed
            .and_then(|j| solve_newton(j, &frozen_coordinates(&f), g))
            .or_else(|| solve_fisher(f, g))
            .unwrap_or(g),
        _ => g,
    }
}

/// Relative size below which a diagonal Fisher entry marks a coordinate as
/// uninformative (a scale parameter pinned near zero, where the likelihood
/// is flat in its logarithm).
const FROZEN_INFORMATION: f64 = 1e-10;

fn frozen_coordinates(f: &[[f64; 3]; 3]) -> [bool; 3] {
    let max_diag = (0..3).fold(0.0f64, |m, i| m.max(f[i][i]));
    [0, 1, 2].map(|i| !(f[i][i] > FROZEN_INFORMATION * max_diag))
}

/// Newton step `J d = g` over the informative coordinates; `None` unless the
/// observed information `J` is positive definite there.
fn solve_newton(j: [[f64; 3]; 3], frozen: &[bool; 3], g: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for r in 0..3 {
        if frozen[r] {
            a[r][r] = 1.0;
            continue;
        }
        for c in 0..3 {
            if !frozen[c] {
                a[r][c] = j[r][c];
            }
        }
        b[r] = g[r];
    }
    cholesky3_solve(a, b)
}

/// Solve `(F + lambda diag F) d = g` over the informative coordinates, raising
/// the damping until the system is positive definite. Uninformative
/// coordinates get a zero step.
fn solve_fisher(f: [[f64; 3]; 3], g: [f64; 3]) -> Option<[f64; 3]> {
    let max_diag = (0..3).fold(0.0f64, |m, i| m.max(f[i][i]));
    if !(max_diag > 0.0) {
        return None;
    }
    let frozen = frozen_coordinates(&f);
    let free: Vec<usize> = (0..3).filter(|&i| !frozen[i]).collect();
    let mut lambda = 0.0;
    for _ in 0..12 {
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for i in 0..3 {
            if free.contains(&i) {
                for &j in &free {
                    a[i][j] = f[i][j];
                }
                a[i][i] += lambda * f[i][i];
                b[i] = g[i];
            } else {
                a[i][i] = 1.0;
            }
        }
        if let Some(d) = cholesky3_solve(a, b) {
            return Some(d);
        }
        lambda = if lambda == 0.0 { 1e-10 } else { lambda * 100.0 };
    }
    None
}

fn cholesky3_solve(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn ascend(
    problem: &GpProblem,
    theta0: [f64; 3],
    opts: &OptimizerSettings,
    start: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<(GpFit, f64)> {
    let fisher = opts.direction != AscentDirection::Steepest;
    let params_at = |theta: &[f64; 3]| -> Result<GpParams> {
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::Optimizer("non-finite parameters".into()));
        }
        Ok(GpParams::from_theta(theta))
    };
    let eval_at = |theta: &[f64; 3]| -> Result<Evaluation> {
        problem.evaluate(&params_at(theta)?, true, fisher)
    };
    // line-search trials only need the likelihood
    let ll_at = |theta: &[f64; 3]| -> Result<f64> { problem.log_likelihood(&params_at(theta)?) };

    let mut theta = theta0;
    let mut current = eval_at(&theta)?;
    let initial_ll = current.log_likelihood;
    let mut step = opts.initial_step;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut record = |iteration: usize, theta: &[f64; 3], e: &Evaluation, step: f64| {
        let p = GpParams::from_theta(theta);
        trace.push(TraceEntry {
            start,
            iteration,
            log_likelihood: e.log_likelihood,
            gradient_norm: inf_norm(&e.gradient.expect("gradient")),
            step,
            sigma: p.sigma,
            sigma_f: p.sigma_f,
            sigma_l: p.sigma_l,
        });
    };
    record(0, &theta, &current, step);

    while iterations < opts.max_iterations {
        let g = current.gradient.expect("gradient");
        let g_norm = inf_norm(&g);
        if g_norm < opts.tolerance {
            status = FitStatus::Converged;
            break;
        }
        if let Some(f) = current.fisher {
            let frozen = frozen_coordinates(&f);
            let settled = (0..3).all(|i| {
                let tol = if frozen[i] {
                    opts.boundary_tolerance
                } else {
                    opts.tolerance
                };
                g[i].abs() < tol
            });
            if settled {
                status = FitStatus::Boundary;
                break;
            }
        }
        // Fisher scoring can stall where the information is nearly singular
        // (a scale parameter drifting to its boundary); fall back to the
        // plain gradient before giving up.
        let mut directions = vec![direction(&current, opts.direction)];
        if opts.direction != AscentDirection::Steepest {
            directions.push(g);
        }
        let mut accepted = None;
        for (k, dir) in directions.iter().enumerate() {
            let dir_norm = inf_norm(dir).max(f64::MIN_POSITIVE);
            let cap = opts.max_log_change / dir_norm;
            let first = if k == 0 { step } else { opts.initial_step }.min(cap);
            let mut s = first;
            // the fallback only needs to find some uphill move
            let min_step = if k + 1 < directions.len() {
                opts.min_step.max(1e-6)
            } else {
                opts.min_step
            };
            while s >= min_step {
                let candidate = [
                    theta[0] + s * dir[0],
                    theta[1] + s * dir[1],
                    theta[2] + s * dir[2],
                ];
                // the first trial is usually accepted, so evaluate it in full
                let trial = if s == first {
                    eval_at(&candidate).map(|e| (e.log_likelihood, Some(e)))
                } else {
                    ll_at(&candidate).map(|ll| (ll, None))
                };
                match trial {
                    Ok((ll, full)) => {
                        let gain = ll - current.log_likelihood;
                        // Near the optimum the gain is below rounding of the
                        // likelihood; accept such moves if they shrink the gradient.
                        let within_rounding =
                            gain.abs() <= 1e-13 * current.log_likelihood.abs().max(1.0);
                        if gain > 0.0 || within_rounding {
                            match full.map_or_else(|| eval_at(&candidate), Ok) {
                                Ok(e) => {
                                    let smaller_gradient =
                                        inf_norm(&e.gradient.expect("gradient")) < g_norm;
                                    if gain > 0.0 || smaller_gradient {
                                        accepted = Some((candidate, e));
                                        break;
                                    }
                                }
                                Err(e) => log::trace!("rejected step {s:e}: {e}"),
                            }
                        }
                    }
                    Err(e) => log::trace!("rejected step {s:e}: {e}"),
                }
                s *= opts.shrink;
            }
            // the multiplier only adapts to backtracking, not to the move cap
            if k == 0 && s < first {
                step = s;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((t, e)) => {
                theta = t;
                current = e;
                iterations += 1;
                record(iterations, &theta, &current, step);
                step = (step * opts.grow).min(opts.max_step);
            }
            None => {
                if iterations == 0 && current.log_likelihood == initial_ll && g_norm > 1.0 {
                    return Err(Error::Optimizer(format!(
                        "no uphill step from the start point (gradient norm {g_norm:e})"
                    )));
                }
                status = FitStatus::Stalled;
                break;
            }
        }
    }
    if status == FitStatus::MaxIterations {
        log::warn!(
            "GP optimizer reached {} iterations without converging",
            opts.max_iterations
        );
    }
    let fit = GpFit {
        params: GpParams::from_theta(&theta),
        log_likelihood: current.log_likelihood,
        gradient: current.gradient.expect("gradient"),
        iterations,
        status,
        starts: Vec::new(),
        trace: Vec::new(),
    };
    Ok((fit, initial_ll))
}

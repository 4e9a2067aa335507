//! Stochastic gradient ascent on the lower bound with Adam.
//!
//! Each iteration draws `s ~ N(0, I)` (or K such draws), forms the path
//! gradient (K = 1) or the doubly reparametrized IWLB gradient (K > 1), and
//! takes a bias-corrected Adam step. Bound estimates are averaged over
//! non-overlapping windows; a fit stops once the least-squares slope through
//! the last κ window means turns negative.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{dreg_gradient, iwlb_estimate, path_gradient};
use crate::error::{Error, Result};
use crate::family::{LambdaBlocks, VariationalParams};
use crate::models::Model;
use crate::verify::Welford;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step: 0.001,
            tau1: 0.9,
            tau2: 0.99,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            config,
        }
    }

    /// Updates the moments with `g` and returns the ascent step `Δ`.
    pub fn step(&mut self, g: &[f64]) -> Vec<f64> {
        let AdamConfig { step, tau1, tau2, eps } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - tau1.powi(t);
        let c2 = 1.0 - tau2.powi(t);
        self.m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(g)
            .map(|((m, v), g)| {
                *m = tau1 * *m + (1.0 - tau1) * g;
                *v = tau2 * *v + (1.0 - tau2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                step * m_hat / (v_hat.sqrt() + eps)
            })
            .collect()
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, g: &[f64]) -> (AdamState, Vec<f64>) {
    let mut next = state.clone();
    let delta = next.step(g);
    (next, delta)
}

/// Least-squares slope of `y` against abscissae `1..=y.len()`.
pub fn ols_slope(y: &[f64]) -> f64 {
    let k = y.len() as f64;
    let x_mean = (k + 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = (i + 1) as f64 - x_mean;
        sxy += dx * (v - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// True once the slope through the last `kappa` window means is negative.
pub fn convergence_check(window_means: &[f64], kappa: usize) -> bool {
    if kappa < 2 || window_means.len() < kappa {
        return false;
    }
    ols_slope(&window_means[window_means.len() - kappa..]) < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gva,
    Csgva,
    Iw,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gva => "gva",
            Method::Csgva => "csgva",
            Method::Iw => "iw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Standard normal `q`.
    Zero,
    /// Fit GVA first and start CSGVA from it.
    #[value(name = "from_gva")]
    FromGva,
    /// λ supplied by the caller (for instance read from an earlier fit).
    #[value(name = "from_file")]
    FromFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    /// Importance samples per iteration for `iw`.
    #[serde(rename = "K")]
    pub k: usize,
    pub max_iters: usize,
    pub stop_window: usize,
    pub kappa: usize,
    pub seed: u64,
    pub init: Init,
    pub iw_iters: usize,
    pub max_rejections: usize,
    /// Keep `F` at zero in a CSGVA fit without switching to gaussian mode.
    pub freeze_f: bool,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Csgva,
            k: 5,
            max_iters: 100_000,
            stop_window: 1000,
            kappa: 6,
            seed: 0,
            init: Init::Zero,
            iw_iters: 1000,
            max_rejections: 100,
            freeze_f: false,
            adam: AdamConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.method == Method::Iw && self.k < 2 {
            return bad("K must be at least 2 for method iw");
        }
        if self.kappa < 2 {
            return bad("kappa must be at least 2");
        }
        if self.stop_window == 0 || self.max_iters == 0 || self.iw_iters == 0 {
            return bad("stop_window, max_iters and iw_iters must be positive");
        }
        if self.max_rejections == 0 {
            return bad("max_rejections must be positive");
        }
        let a = self.adam;
        if !(a.step > 0.0 && (0.0..1.0).contains(&a.tau1) && (0.0..1.0).contains(&a.tau2) && a.eps > 0.0) {
            return bad("Adam hyperparameters out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Slope,
    MaxIters,
    /// Fixed IW budget exhausted.
    Budget,
    Diverged,
}

/// Summary of one optimization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub method: Method,
    pub iterations: usize,
    pub rejected: usize,
    pub stop_reason: StopReason,
    pub final_window_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub lambda: VariationalParams,
    /// Per-iteration bound estimates; written separately as `trace.csv`.
    #[serde(skip)]
    pub trace: Vec<f64>,
    pub window_means: Vec<f64>,
    pub iterations: usize,
    pub rejected: usize,
    pub stop_reason: StopReason,
    /// Earlier stages of a staged fit, oldest first.
    pub stages: Vec<StageSummary>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl FitReport {
    pub fn summary(&self) -> StageSummary {
        StageSummary {
            method: self.method,
            iterations: self.iterations,
            rejected: self.rejected,
            stop_reason: self.stop_reason,
            final_window_mean: self.window_means.last().copied(),
        }
    }
}

fn normals(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn is_rejectable(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::SingularFactor { .. })
}

/// Runs one optimization stage from `lambda0`.
///
/// `method` selects the estimator: `iw` uses `config.k` draws and the fixed
/// `iw_iters` budget, the others use one draw and the slope stopping rule.
/// `stream` selects an independent random stream derived from `config.seed`.
pub fn fit_stage<M: Model + ?Sized>(
    model: &M,
    lambda0: VariationalParams,
    method: Method,
    config: &FitConfig,
    stream: u64,
) -> Result<FitReport> {
    config.validate()?;
    let dims = model.dims();
    if lambda0.dims() != dims {
        return Err(Error::invalid(format!(
            "λ has dimensions {:?} but the model has {:?}",
            lambda0.dims(),
            dims
        )));
    }
    let start = Instant::now();
    let mut lambda = lambda0;
    lambda.set_gaussian_mode(method == Method::Gva)?;
    let freeze = config.freeze_f && method != Method::Gva;
    if freeze && lambda.fmat().iter().any(|v| *v != 0.0) {
        return Err(Error::invalid("freeze_f requires F = 0 at the start"));
    }
    let fmat = lambda.layout().fmat();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let dim = dims.theta_dim();
    let (k, budget) = match method {
        Method::Iw => (config.k, config.iw_iters),
        _ => (1, config.max_iters),
    };
    let slope_test = method != Method::Iw;

    let mut adam = AdamState::new(lambda.len(), config.adam);
    let mut trace = Vec::new();
    let mut window_means = Vec::new();
    let mut window = Welford::default();
    let mut rejected = 0;
    let mut consecutive = 0;
    let mut stop_reason = if slope_test { StopReason::MaxIters } else { StopReason::Budget };

    while trace.len() < budget {
        let estimate = if k == 1 {
            path_gradient(&lambda, model, &normals(&mut rng, dim))
        } else {
            let draws: Vec<Vec<f64>> = (0..k).map(|_| normals(&mut rng, dim)).collect();
            dreg_gradient(&lambda, model, &draws)
        };
        let estimate = match estimate {
            Ok(e) if e.gradient.is_finite() && e.bound.is_finite() => Ok(e),
            Ok(_) => Err(Error::NonFinite("gradient estimate".into())),
            Err(e) => Err(e),
        };
        let estimate = match estimate {
            Ok(e) => e,
            Err(e) if is_rejectable(&e) => {
                rejected += 1;
                consecutive += 1;
                if consecutive >= config.max_rejections {
                    let iterations = trace.len();
                    let report = FitReport {
                        method,
                        lambda,
                        trace,
                        window_means,
                        iterations,
                        rejected,
                        stop_reason: StopReason::Diverged,
                        stages: Vec::new(),
                        wall_time_secs: start.elapsed().as_secs_f64(),
                    };
                    return Err(Error::FitDiverged {
                        reason: format!("{consecutive} consecutive rejected steps, last: {e}"),
                        report: Box::new(report),
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        consecutive = 0;

        let mut grad = estimate.gradient.into_values();
        if freeze {
            grad[fmat.clone()].iter_mut().for_each(|v| *v = 0.0);
        }
        let delta = adam.step(&grad);
        for (l, d) in lambda.values_mut().iter_mut().zip(&delta) {
            *l += d;
        }
        trace.push(estimate.bound);
        window.push(estimate.bound);
        if window.count == config.stop_window {
            window_means.push(window.mean);
            window = Welford::default();
            if slope_test && convergence_check(&window_means, config.kappa) {
                stop_reason = StopReason::Slope;
                break;
            }
        }
    }

    Ok(FitReport {
        method,
        lambda,
        iterations: trace.len(),
        trace,
        window_means,
        rejected,
        stop_reason,
        stages: Vec::new(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fits `config.method`, running the prerequisite stages it needs.
///
/// - `gva`: a single GVA stage.
/// - `csgva`: a CSGVA stage, preceded by GVA when `init = from_gva`.
/// - `iw`: the CSGVA route above followed by the fixed-length IW stage.
///
/// With `init = from_file`, `lambda0` is the starting point of the first stage.
pub fn fit<M: Model + ?Sized>(
    model: &M,
    lambda0: Option<VariationalParams>,
    config: &FitConfig,
) -> Result<FitReport> {
    config.validate()?;
    let dims = model.dims();
    let start = Instant::now();
    let mut lambda = match (config.init, lambda0) {
        (Init::FromFile, Some(l)) => l,
        (Init::FromFile, None) => {
            return Err(Error::Config("init = from_file needs a starting λ".into()))
        }
        (_, Some(_)) => {
            return Err(Error::Config(
                "a starting λ was supplied but init is not from_file".into(),
            ))
        }
        (_, None) => VariationalParams::zeros(dims, false)?,
    };

    let mut plan = Vec::new();
    match config.method {
        Method::Gva => plan.push(Method::Gva),
        Method::Csgva | Method::Iw => {
            if config.init == Init::FromGva {
                plan.push(Method::Gva);
            }
            plan.push(Method::Csgva);
            if config.method == Method::Iw {
                plan.push(Method::Iw);
            }
        }
    }

    let mut stages = Vec::new();
    let mut last = None;
    for (i, method) in plan.iter().enumerate() {
        let mut report = match fit_stage(model, lambda, *method, config, i as u64) {
            Ok(r) => r,
            Err(Error::FitDiverged { reason, mut report }) => {
                report.stages = stages;
                return Err(Error::FitDiverged { reason, report });
            }
            Err(e) => return Err(e),
        };
        lambda = report.lambda.clone();
        if let Some(prev) = last.replace(report.summary()) {
            stages.push(prev);
        }
        report.stages = stages.clone();
        report.wall_time_secs = start.elapsed().as_secs_f64();
        if i + 1 == plan.len() {
            return Ok(report);
        }
    }
    unreachable!("plan always has at least one stage")
}

/// Mean and standard deviation of a bound estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub reps: usize,
}

/// Estimates the ELBO (`k = 1`) or the IWLB (`k > 1`) from `reps`
/// independent replications drawn from a stream separate from training.
pub fn estimate_bound<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    if k == 0 || reps == 0 {
        return Err(Error::invalid("K and reps must be positive"));
    }
    const BOUND_STREAM: u64 = 1 << 32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BOUND_STREAM);
    let dim = model.dims().theta_dim();
    let mut acc = Welford::default();
    const BATCH: usize = 64;
    let mut done = 0;
    while done < reps {
        let batch = BATCH.min(reps - done);
        let draws: Vec<Vec<Vec<f64>>> = (0..batch)
            .map(|_| (0..k).map(|_| normals(&mut rng, dim)).collect())
            .collect();
        let values: Vec<f64> = draws
            .par_iter()
            .map(|d| iwlb_estimate(lambda, model, d))
            .collect::<Result<_>>()?;
        for v in values {
            acc.push(v);
        }
        done += batch;
    }
    Ok(BoundEstimate {
        mean: acc.mean,
        sd: acc.sd(),
        k,
        reps,
    })
}

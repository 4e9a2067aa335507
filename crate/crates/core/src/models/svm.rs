//! Stochastic volatility model, noncentered parametrization.
//!
//! ```text
//! y_i | b_i ~ N(0, exp(σ b_i + κ)),  b_i | b_{i−1} ~ N(φ b_{i−1}, 1),  b_1 ~ N(0, 1/(1−φ²))
//! ```
//!
//! Globals are mapped to the real line as `α = log(eᵟ − 1)` (σ) and
//! `ψ = logit(φ)`, so `θ = (α, κ, ψ, b_1, …, b_n)`.

use super::{check_theta, check_value, sigmoid, softplus, Model, ModelDims};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SvmData {
    y: Vec<f64>,
    pub sigma2_alpha: f64,
    pub sigma2_kappa: f64,
    pub sigma2_psi: f64,
}

impl SvmData {
    pub const DEFAULT_PRIOR_VARIANCE: f64 = 10.0;

    /// Mean-corrected responses.
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidData("empty return series".into()));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response {bad}")));
        }
        Ok(Self {
            y,
            sigma2_alpha: Self::DEFAULT_PRIOR_VARIANCE,
            sigma2_kappa: Self::DEFAULT_PRIOR_VARIANCE,
            sigma2_psi: Self::DEFAULT_PRIOR_VARIANCE,
        })
    }

    /// Mean-corrects a rate series `r_0..r_n` first.
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        Self::new(mean_correct(rates)?)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `(α, κ, ψ) ↦ (σ, κ, φ)` with `σ = log(1 + eᵅ)` and `φ = logistic(ψ)`.
pub fn svm_natural(alpha: f64, kappa: f64, psi: f64) -> (f64, f64, f64) {
    (softplus_exact(alpha), kappa, sigmoid(psi))
}

/// `(σ, κ, φ) ↦ (α, κ, ψ)`; inverse of [`svm_natural`].
pub fn svm_transformed(sigma: f64, kappa: f64, phi: f64) -> (f64, f64, f64) {
    // log(eˢ − 1) = σ + log(1 − e⁻ˢ)
    let alpha = sigma + (-(-sigma).exp_m1()).ln();
    let psi = (phi / (1.0 - phi)).ln();
    (alpha, kappa, psi)
}

/// Softplus without the far-tail shortcut, so the round trip stays exact.
fn softplus_exact(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `y_t = 100 {log(r_t / r_{t−1}) − mean}` for `t = 1..n`.
pub fn mean_correct(rates: &[f64]) -> Result<Vec<f64>> {
    if rates.len() < 2 {
        return Err(Error::InvalidData(
            "need at least two rates to form a return".into(),
        ));
    }
    if let Some((i, r)) = rates.iter().enumerate().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidData(format!(
            "rate {i} is {r}; rates must be positive"
        )));
    }
    let logret: Vec<f64> = rates.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let mean = logret.iter().sum::<f64>() / logret.len() as f64;
    Ok(logret.iter().map(|v| 100.0 * (v - mean)).collect())
}

struct Globals {
    sigma: f64,
    phi: f64,
    /// 1 − φ
    one_minus_phi: f64,
}

fn globals(alpha: f64, psi: f64) -> Globals {
    Globals {
        sigma: softplus(alpha),
        phi: sigmoid(psi),
        one_minus_phi: sigmoid(-psi),
    }
}

/// `log p(y, θ)` up to an additive constant.
pub fn svm_log_joint(data: &SvmData, theta: &[f64]) -> Result<f64> {
    let n = data.len();
    check_theta(theta, 3 + n)?;
    let (alpha, kappa, psi) = (theta[0], theta[1], theta[2]);
    let b = &theta[3..];
    let gl = globals(alpha, psi);
    let (sigma, phi) = (gl.sigma, gl.phi);
    let one_minus_phi2 = gl.one_minus_phi * (1.0 + phi);
    // log(1 − φ²) = log(1 − φ) + log(1 + φ)
    let log_one_minus_phi2 = -softplus(psi) + phi.ln_1p();

    let mut value = -(n as f64) * kappa / 2.0;
    for (bi, yi) in b.iter().zip(&data.y) {
        value -= 0.5 * sigma * bi + 0.5 * yi * yi * (-sigma * bi - kappa).exp();
    }
    for w in b.windows(2) {
        let e = w[1] - phi * w[0];
        value -= 0.5 * e * e;
    }
    value += -0.5 * b[0] * b[0] * one_minus_phi2 + 0.5 * log_one_minus_phi2
        - alpha * alpha / (2.0 * data.sigma2_alpha)
        - kappa * kappa / (2.0 * data.sigma2_kappa)
        - psi * psi / (2.0 * data.sigma2_psi);
    check_value(value, "SVM log joint")
}

/// `∇_θ log p(y, θ)`.
pub fn svm_grad(data: &SvmData, theta: &[f64]) -> Result<Vec<f64>> {
    let n = data.len();
    check_theta(theta, 3 + n)?;
    let (alpha, kappa, psi) = (theta[0], theta[1], theta[2]);
    let b = &theta[3..];
    let gl = globals(alpha, psi);
    let (sigma, phi) = (gl.sigma, gl.phi);
    let one_minus_phi2 = gl.one_minus_phi * (1.0 + phi);
    // dσ/dα = 1 − e^{−σ}
    let dsigma = -(-sigma).exp_m1();

    let mut grad = vec![0.0; 3 + n];
    let mut g_alpha = 0.0;
    let mut g_kappa = 0.0;
    for (i, (bi, yi)) in b.iter().zip(&data.y).enumerate() {
        let scaled = yi * yi * (-sigma * bi - kappa).exp();
        g_alpha += bi * scaled - bi;
        g_kappa += scaled;
        grad[3 + i] = 0.5 * sigma * (scaled - 1.0);
    }
    grad[0] = 0.5 * g_alpha * dsigma - alpha / data.sigma2_alpha;
    grad[1] = 0.5 * (g_kappa - n as f64) - kappa / data.sigma2_kappa;

    let mut ar = b[0] * b[0] * phi;
    for w in b.windows(2) {
        ar += (w[1] - phi * w[0]) * w[0];
    }
    // φ/(1 − φ²) · φ(1 − φ) = φ²/(1 + φ)
    grad[2] = ar * phi * gl.one_minus_phi - phi * phi / (1.0 + phi) - psi / data.sigma2_psi;

    grad[3] -= b[0] * one_minus_phi2;
    for i in 0..n.saturating_sub(1) {
        let e = b[i + 1] - phi * b[i];
        grad[3 + i] += phi * e;
        grad[3 + i + 1] -= e;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("SVM gradient".into()));
    }
    Ok(grad)
}

impl Model for SvmData {
    fn dims(&self) -> ModelDims {
        let n = self.len();
        ModelDims::new(3, n, 1, usize::from(n >= 2))
    }

    fn log_joint(&self, theta: &[f64]) -> Result<f64> {
        svm_log_joint(self, theta)
    }

    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>> {
        svm_grad(self, theta)
    }

    fn global_labels(&self) -> Vec<String> {
        vec!["alpha".into(), "kappa".into(), "psi".into()]
    }
}

//! Independent oracles: central finite differences, dense Gaussian densities,
//! naive model log-joints, quadrature and Monte Carlo mean tests.
//!
//! Nothing here reuses the banded kernels from [`crate::linalg`]; agreement
//! with those code paths is evidence rather than tautology.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::models::{GlmmData, GlmmFamily, Model, ModelDims, SvmData};

/// Settings for [`fd_gradient`] and [`compare_gradients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpec {
    pub h: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        Self {
            h: 1e-5,
            rel_tol: 1e-6,
            abs_floor: 1e-8,
        }
    }
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], spec: &FdSpec) -> Result<Vec<f64>> {
    if !(spec.h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + spec.h;
        let up = f(&probe);
        probe[i] = x[i] - spec.h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::OracleFailure {
                coordinate: i,
                message: format!("non-finite probe ({up}, {down})"),
            });
        }
        grad.push((up - down) / (2.0 * spec.h));
    }
    Ok(grad)
}

/// Checks `|a − b| ≤ rel_tol · max(|b|, 1) + abs_floor` coordinatewise.
pub fn compare_gradients(analytic: &[f64], reference: &[f64], rel_tol: f64, abs_floor: f64) -> Result<()> {
    if analytic.len() != reference.len() {
        return Err(Error::invalid("gradient lengths differ"));
    }
    for (i, (a, b)) in analytic.iter().zip(reference).enumerate() {
        if !((a - b).abs() <= rel_tol * b.abs().max(1.0) + abs_floor) {
            return Err(Error::OracleFailure {
                coordinate: i,
                message: format!("analytic {a} vs reference {b}"),
            });
        }
    }
    Ok(())
}

/// `log N(x; mean, (T Tᵀ)⁻¹)` for a dense lower-triangular `T` given row-major.
pub fn dense_gaussian_logpdf(mean: &[f64], t: &[f64], x: &[f64]) -> Result<f64> {
    let dim = mean.len();
    if x.len() != dim || t.len() != dim * dim {
        return Err(Error::invalid("dense Gaussian dimensions disagree"));
    }
    let mut log_det = 0.0;
    for i in 0..dim {
        let tii = t[i * dim + i];
        if !(tii > 0.0 && tii.is_finite()) {
            return Err(Error::SingularFactor { index: i, value: tii });
        }
        log_det += tii.ln();
    }
    let mut quad = 0.0;
    for j in 0..dim {
        // (Tᵀ(x − μ))_j = Σ_{i ≥ j} T_ij (x_i − μ_i)
        let v: f64 = (j..dim).map(|i| t[i * dim + j] * (x[i] - mean[i])).sum();
        quad += v * v;
    }
    Ok(-0.5 * dim as f64 * (2.0 * PI).ln() + log_det - 0.5 * quad)
}

/// Dense Cholesky `A = L Lᵀ` of a symmetric positive definite row-major matrix.
pub fn dense_cholesky(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim {
        return Err(Error::invalid("matrix is not square"));
    }
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let s: f64 = a[i * dim + j] - (0..j).map(|k| l[i * dim + k] * l[j * dim + k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::SingularFactor { index: i, value: s });
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Dense inverse of a lower-triangular row-major matrix.
pub fn dense_lower_inverse(t: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; dim * dim];
    for c in 0..dim {
        for i in c..dim {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (c..i).map(|k| t[i * dim + k] * inv[k * dim + c]).sum();
            let tii = t[i * dim + i];
            if tii == 0.0 {
                return Err(Error::SingularFactor { index: i, value: tii });
            }
            inv[i * dim + c] = (rhs - s) / tii;
        }
    }
    Ok(inv)
}

/// Outcome of [`mc_mean_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct McMeanTest {
    pub z: Vec<f64>,
    pub pass: bool,
}

impl McMeanTest {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Tests each coordinate of a sampler's mean against `claimed` at 4 standard
/// errors. Coordinates with zero sample variance pass only on exact agreement.
pub fn mc_mean_test(
    mut sampler: impl FnMut() -> Vec<f64>,
    dim: usize,
    m: usize,
    claimed: &[f64],
) -> Result<McMeanTest> {
    if m < 1000 {
        return Err(Error::invalid("at least 1000 samples are required"));
    }
    if claimed.len() != dim {
        return Err(Error::invalid("claimed mean has the wrong length"));
    }
    let mut stats = vec![Welford::default(); dim];
    for _ in 0..m {
        let x = sampler();
        if x.len() != dim {
            return Err(Error::invalid("sampler returned the wrong length"));
        }
        for (s, v) in stats.iter_mut().zip(&x) {
            s.push(*v);
        }
    }
    let z: Vec<f64> = stats
        .iter()
        .zip(claimed)
        .map(|(s, c)| {
            let se = (s.variance() / m as f64).sqrt();
            let diff = s.mean - c;
            if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let pass = z.iter().all(|z| z.abs() <= 4.0);
    Ok(McMeanTest { z, pass })
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

/// Composite trapezoid rule on `[a, b]` with `m` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Tensor-product trapezoid rule on `[x0, x1] × [y0, y1]` with `m` intervals per axis.
pub fn trapezoid_2d(f: impl Fn(f64, f64) -> f64, x: (f64, f64), y: (f64, f64), m: usize) -> f64 {
    let hx = (x.1 - x.0) / m as f64;
    let hy = (y.1 - y.0) / m as f64;
    let weight = |i: usize| if i == 0 || i == m { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..=m {
        let xi = x.0 + i as f64 * hx;
        for j in 0..=m {
            total += weight(i) * weight(j) * f(xi, y.0 + j as f64 * hy);
        }
    }
    total * hx * hy
}

/// Direct evaluation of the centered GLMM log joint with dense matrices.
pub fn naive_glmm_log_joint(data: &GlmmData, theta: &[f64]) -> Result<f64> {
    let p = data.n_fixed();
    let l = data.n_random();
    let nw = l * (l + 1) / 2;
    let n = data.n_subjects();
    if theta.len() != p + nw + n * l {
        return Err(Error::invalid("θ has the wrong length"));
    }
    let beta = &theta[..p];
    let omega = &theta[p..p + nw];

    // W from vech(W*), column-major diagonal-down, exponentiated diagonal
    let mut w = vec![0.0; l * l];
    let mut k = 0;
    for col in 0..l {
        for row in col..l {
            w[row * l + col] = if row == col { omega[k].exp() } else { omega[k] };
            k += 1;
        }
    }
    let mut prec = vec![0.0; l * l];
    for a in 0..l {
        for b in 0..l {
            prec[a * l + b] = (0..l).map(|m| w[a * l + m] * w[b * l + m]).sum();
        }
    }
    let beta_rg1: Vec<f64> = data
        .random_cols
        .iter()
        .chain(&data.subject_cols)
        .map(|&c| beta[c])
        .collect();
    let beta_g2: Vec<f64> = data.other_cols.iter().map(|&c| beta[c]).collect();
    let cols = beta_rg1.len();

    let mut total = 0.0;
    for (i, s) in data.subjects.iter().enumerate() {
        let b = &theta[p + nw + i * l..p + nw + (i + 1) * l];
        let ci = crate::models::build_ci(l, &s.x_g1);
        let r: Vec<f64> = (0..l)
            .map(|a| b[a] - (0..cols).map(|c| ci[a * cols + c] * beta_rg1[c]).sum::<f64>())
            .collect();
        let mut quad = 0.0;
        for a in 0..l {
            for c in 0..l {
                quad += r[a] * prec[a * l + c] * r[c];
            }
        }
        total -= quad / 2.0;
        let g2 = beta_g2.len();
        for j in 0..s.y.len() {
            let eta: f64 = (0..l).map(|a| s.z[j * l + a] * b[a]).sum::<f64>()
                + (0..g2).map(|a| s.x_g2[j * g2 + a] * beta_g2[a]).sum::<f64>();
            let h = match data.family() {
                GlmmFamily::Poisson => eta.exp(),
                GlmmFamily::Bernoulli => (1.0 + eta.exp()).ln(),
            };
            total += s.y[j] * eta - h;
        }
    }
    let log_det_w: f64 = (0..l).map(|a| w[a * l + a].ln()).sum();
    total += -beta.iter().map(|v| v * v).sum::<f64>() / (2.0 * data.sigma2_beta)
        - omega.iter().map(|v| v * v).sum::<f64>() / (2.0 * data.sigma2_omega)
        + n as f64 * log_det_w;
    Ok(total)
}

/// Direct evaluation of the stochastic volatility log joint.
pub fn naive_svm_log_joint(data: &SvmData, theta: &[f64]) -> Result<f64> {
    let y = data.y();
    let n = y.len();
    if theta.len() != 3 + n {
        return Err(Error::invalid("θ has the wrong length"));
    }
    let (alpha, kappa, psi) = (theta[0], theta[1], theta[2]);
    let b = &theta[3..];
    let sigma = (1.0 + alpha.exp()).ln();
    let phi = psi.exp() / (1.0 + psi.exp());
    let mut total = -(n as f64) * kappa / 2.0;
    for i in 0..n {
        total -= sigma * b[i] / 2.0;
        total -= y[i] * y[i] * (-sigma * b[i] - kappa).exp() / 2.0;
    }
    for i in 1..n {
        total -= (b[i] - phi * b[i - 1]).powi(2) / 2.0;
    }
    total -= b[0] * b[0] * (1.0 - phi * phi) / 2.0;
    total += (1.0 - phi * phi).ln() / 2.0;
    total -= alpha * alpha / (2.0 * data.sigma2_alpha)
        + kappa * kappa / (2.0 * data.sigma2_kappa)
        + psi * psi / (2.0 * data.sigma2_psi);
    Ok(total)
}

/// A Gaussian target `p(y, θ) = Z · N(θ; m, (T Tᵀ)⁻¹)` with known evidence `log Z`.
///
/// Its posterior lies exactly inside the GVA family, which makes it the
/// reference toy for bounds and optimizer checks.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    dims: ModelDims,
    mean: Vec<f64>,
    /// Lower-triangular precision factor, row-major.
    t: Vec<f64>,
    precision: Vec<f64>,
    pub log_evidence: f64,
}

impl GaussianTarget {
    pub fn new(dims: ModelDims, mean: Vec<f64>, t: Vec<f64>, log_evidence: f64) -> Result<Self> {
        let dim = dims.theta_dim();
        if mean.len() != dim || t.len() != dim * dim {
            return Err(Error::invalid("Gaussian target dimensions disagree"));
        }
        for i in 0..dim {
            if !(t[i * dim + i] > 0.0) {
                return Err(Error::SingularFactor { index: i, value: t[i * dim + i] });
            }
            if t[i * dim + i + 1..(i + 1) * dim].iter().any(|v| *v != 0.0) {
                return Err(Error::invalid("precision factor must be lower triangular"));
            }
        }
        let mut precision = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                precision[a * dim + b] = (0..dim).map(|k| t[a * dim + k] * t[b * dim + k]).sum();
            }
        }
        Ok(Self { dims, mean, t, precision, log_evidence })
    }

    /// Independent coordinates `θ_j ~ N(mean_j, sd_j²)`.
    pub fn diagonal(dims: ModelDims, mean: Vec<f64>, sd: &[f64], log_evidence: f64) -> Result<Self> {
        let dim = dims.theta_dim();
        if sd.len() != dim {
            return Err(Error::invalid("sd has the wrong length"));
        }
        let mut t = vec![0.0; dim * dim];
        for i in 0..dim {
            t[i * dim + i] = 1.0 / sd[i];
        }
        Self::new(dims, mean, t, log_evidence)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Precision factor `T`, row-major.
    pub fn factor(&self) -> &[f64] {
        &self.t
    }

    /// Posterior covariance `(T Tᵀ)⁻¹`, row-major.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        let dim = self.mean.len();
        let tinv = dense_lower_inverse(&self.t, dim)?;
        let mut cov = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                cov[a * dim + b] = (0..dim).map(|k| tinv[k * dim + a] * tinv[k * dim + b]).sum();
            }
        }
        Ok(cov)
    }
}

impl Model for GaussianTarget {
    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn log_joint(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_evidence + dense_gaussian_logpdf(&self.mean, &self.t, theta)?)
    }

    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let dim = self.mean.len();
        if theta.len() != dim {
            return Err(Error::invalid("θ has the wrong length"));
        }
        Ok((0..dim)
            .map(|a| {
                -(0..dim)
                    .map(|b| self.precision[a * dim + b] * (theta[b] - self.mean[b]))
                    .sum::<f64>()
            })
            .collect())
    }

    fn global_labels(&self) -> Vec<String> {
        (1..=self.dims.g).map(|i| format!("theta_{i}")).collect()
    }
}

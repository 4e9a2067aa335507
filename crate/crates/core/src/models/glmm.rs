//! Generalized linear mixed model in the centered parametrization.
//!
//! ```text
//! η_i = Z_i b̃_i + X_i^{G2} β_{G2},   b̃_i ~ N(C_i β_{RG1}, Λ),   Λ⁻¹ = W Wᵀ
//! ```
//!
//! `θ = (β, ω, b̃_1, …, b̃_n)` where `ω = vech(W*)` and β is reported in the
//! caller's column order. Internally the columns split into random-effect
//! columns R (these form `Z_i`, intercept first), subject-level columns G1 and
//! the remaining columns G2.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_theta, check_value, sigmoid, softplus, Model, ModelDims};
use crate::error::{Error, Result};
use crate::linalg::{star_to_factor, IndexMap, LowerTri};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmmFamily {
    Poisson,
    Bernoulli,
}

impl GlmmFamily {
    /// Log-partition `h(x)`.
    fn h(self, x: f64) -> f64 {
        match self {
            GlmmFamily::Poisson => x.exp(),
            GlmmFamily::Bernoulli => softplus(x),
        }
    }

    /// `h'(x)`.
    fn dh(self, x: f64) -> f64 {
        match self {
            GlmmFamily::Poisson => x.exp(),
            GlmmFamily::Bernoulli => sigmoid(x),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Subject {
    pub(crate) y: Vec<f64>,
    /// `Z_i`, row-major `n_i × L`.
    pub(crate) z: Vec<f64>,
    /// `X_i^{G2}`, row-major `n_i × g2`.
    pub(crate) x_g2: Vec<f64>,
    /// `x_i^{G1}`.
    pub(crate) x_g1: Vec<f64>,
}

/// Longitudinal data for the GLMM.
#[derive(Debug, Clone)]
pub struct GlmmData {
    family: GlmmFamily,
    column_names: Vec<String>,
    pub(crate) random_cols: Vec<usize>,
    pub(crate) subject_cols: Vec<usize>,
    pub(crate) other_cols: Vec<usize>,
    pub(crate) subjects: Vec<Subject>,
    subject_ids: Vec<String>,
    omega_map: Arc<IndexMap>,
    pub sigma2_beta: f64,
    pub sigma2_omega: f64,
}

/// One subject's rows: responses and the full covariate matrix `X_i`
/// (row-major `n_i × p`, first column the intercept).
#[derive(Debug, Clone)]
pub struct SubjectRows {
    pub id: String,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl GlmmData {
    pub const DEFAULT_PRIOR_VARIANCE: f64 = 100.0;

    /// `random_cols` and `subject_cols` index into the columns of `X`; the
    /// first random column must be the intercept (column 0).
    pub fn new(
        family: GlmmFamily,
        column_names: Vec<String>,
        random_cols: Vec<usize>,
        subject_cols: Vec<usize>,
        subjects: Vec<SubjectRows>,
    ) -> Result<Self> {
        let p = column_names.len();
        if p == 0 {
            return Err(Error::InvalidData("no covariate columns".into()));
        }
        if subjects.is_empty() {
            return Err(Error::InvalidData("no subjects".into()));
        }
        if random_cols.first() != Some(&0) {
            return Err(Error::InvalidData(
                "the first random-effect column must be the intercept".into(),
            ));
        }
        let mut seen = vec![false; p];
        for &c in random_cols.iter().chain(&subject_cols) {
            if c >= p {
                return Err(Error::InvalidData(format!("column index {c} out of range")));
            }
            if seen[c] {
                return Err(Error::InvalidData(format!(
                    "column '{}' listed twice",
                    column_names[c]
                )));
            }
            seen[c] = true;
        }
        let other_cols: Vec<usize> = (0..p).filter(|c| !seen[*c]).collect();
        let l = random_cols.len();

        let mut parsed = Vec::with_capacity(subjects.len());
        let mut ids = Vec::with_capacity(subjects.len());
        for s in subjects {
            let ni = s.y.len();
            if ni == 0 || s.x.len() != ni * p {
                return Err(Error::InvalidData(format!(
                    "subject '{}' has inconsistent rows",
                    s.id
                )));
            }
            for r in 0..ni {
                if s.x[r * p] != 1.0 {
                    return Err(Error::InvalidData(format!(
                        "subject '{}': intercept column must be all ones",
                        s.id
                    )));
                }
            }
            let x_g1: Vec<f64> = subject_cols.iter().map(|&c| s.x[c]).collect();
            for r in 1..ni {
                for (k, &c) in subject_cols.iter().enumerate() {
                    if s.x[r * p + c] != x_g1[k] {
                        return Err(Error::InvalidData(format!(
                            "column '{}' varies within subject '{}'",
                            column_names[c], s.id
                        )));
                    }
                }
            }
            if let Some(bad) = s.y.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "subject '{}' has non-finite response {bad}",
                    s.id
                )));
            }
            if family == GlmmFamily::Bernoulli && s.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidData(format!(
                    "subject '{}': Bernoulli responses must be 0 or 1",
                    s.id
                )));
            }
            if family == GlmmFamily::Poisson && s.y.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidData(format!(
                    "subject '{}': Poisson counts must be non-negative",
                    s.id
                )));
            }
            let pick = |cols: &[usize]| -> Vec<f64> {
                (0..ni)
                    .flat_map(|r| cols.iter().map(move |&c| (r, c)))
                    .map(|(r, c)| s.x[r * p + c])
                    .collect()
            };
            parsed.push(Subject {
                z: pick(&random_cols),
                x_g2: pick(&other_cols),
                x_g1,
                y: s.y,
            });
            ids.push(s.id);
        }
        Ok(Self {
            family,
            column_names,
            random_cols,
            subject_cols,
            other_cols,
            subjects: parsed,
            subject_ids: ids,
            omega_map: Arc::new(IndexMap::dense(l)?),
            sigma2_beta: Self::DEFAULT_PRIOR_VARIANCE,
            sigma2_omega: Self::DEFAULT_PRIOR_VARIANCE,
        })
    }

    pub fn family(&self) -> GlmmFamily {
        self.family
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_random(&self) -> usize {
        self.random_cols.len()
    }

    pub fn n_omega(&self) -> usize {
        let l = self.n_random();
        l * (l + 1) / 2
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    /// `C_i = [I_L, (x_i^{G1ᵀ}; 0)]`, row-major `L × (L + g1)`.
    pub fn build_ci(&self, subject: usize) -> Result<Vec<f64>> {
        let s = self
            .subjects
            .get(subject)
            .ok_or_else(|| Error::invalid(format!("subject index {subject} out of range")))?;
        Ok(build_ci(self.n_random(), &s.x_g1))
    }

    /// β reordered to `(β_{RG1}, β_{G2})`.
    fn split_beta(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rg1 = self
            .random_cols
            .iter()
            .chain(&self.subject_cols)
            .map(|&c| beta[c])
            .collect();
        let g2 = self.other_cols.iter().map(|&c| beta[c]).collect();
        (rg1, g2)
    }

    fn w_factor(&self, omega: &[f64]) -> LowerTri {
        let wstar = LowerTri::new(self.omega_map.clone(), omega.to_vec())
            .expect("ω has L(L+1)/2 entries");
        star_to_factor(&wstar)
    }
}

/// `C_i` for block size `l` and subject-level covariates `x_g1`.
pub fn build_ci(l: usize, x_g1: &[f64]) -> Vec<f64> {
    let cols = l + x_g1.len();
    let mut c = vec![0.0; l * cols];
    for i in 0..l {
        c[i * cols + i] = 1.0;
    }
    c[l..cols].copy_from_slice(x_g1);
    c
}

/// Centered random effect residual `b̃_i − C_i β_{RG1}`.
fn residual(b: &[f64], beta_rg1: &[f64], x_g1: &[f64]) -> Vec<f64> {
    let l = b.len();
    let mut r: Vec<f64> = b.iter().zip(beta_rg1).map(|(b, m)| b - m).collect();
    r[0] -= x_g1.iter().zip(&beta_rg1[l..]).map(|(x, m)| x * m).sum::<f64>();
    r
}

/// `log p(y, θ)` up to an additive constant.
pub fn glmm_log_joint(data: &GlmmData, theta: &[f64]) -> Result<f64> {
    eval(data, theta, false).map(|(v, _)| v)
}

/// `∇_θ log p(y, θ)`.
pub fn glmm_grad(data: &GlmmData, theta: &[f64]) -> Result<Vec<f64>> {
    eval(data, theta, true).map(|(_, g)| g)
}

fn eval(data: &GlmmData, theta: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let p = data.n_fixed();
    let l = data.n_random();
    let nw = data.n_omega();
    let n = data.n_subjects();
    check_theta(theta, p + nw + n * l)?;
    let (beta, rest) = theta.split_at(p);
    let (omega, locals) = rest.split_at(nw);
    let (beta_rg1, beta_g2) = data.split_beta(beta);
    let g1 = data.subject_cols.len();
    let g2 = beta_g2.len();
    let w = data.w_factor(omega);
    let family = data.family;

    let mut value = 0.0;
    let mut grad = if want_grad { vec![0.0; theta.len()] } else { Vec::new() };
    let mut grad_rg1 = vec![0.0; l + g1];
    let mut grad_g2 = vec![0.0; g2];
    let mut scatter = vec![0.0; l * l];

    for (i, s) in data.subjects.iter().enumerate() {
        let b = &locals[i * l..(i + 1) * l];
        let r = residual(b, &beta_rg1, &s.x_g1);
        let wt_r = w.mul_upper_transpose(&r)?;
        value -= 0.5 * wt_r.iter().map(|v| v * v).sum::<f64>();

        let ni = s.y.len();
        let mut resid_y = if want_grad { vec![0.0; ni] } else { Vec::new() };
        for j in 0..ni {
            let zrow = &s.z[j * l..(j + 1) * l];
            let xrow = &s.x_g2[j * g2..(j + 1) * g2];
            let eta: f64 = zrow.iter().zip(b).map(|(z, b)| z * b).sum::<f64>()
                + xrow.iter().zip(&beta_g2).map(|(x, b)| x * b).sum::<f64>();
            value += s.y[j] * eta - family.h(eta);
            if want_grad {
                resid_y[j] = s.y[j] - family.dh(eta);
            }
        }
        if !want_grad {
            continue;
        }
        // W Wᵀ r
        let t = w.mul_lower(&wt_r)?;
        let gb = &mut grad[p + nw + i * l..p + nw + (i + 1) * l];
        for (k, g) in gb.iter_mut().enumerate() {
            *g = (0..ni).map(|j| s.z[j * l + k] * resid_y[j]).sum::<f64>() - t[k];
        }
        for (k, g) in grad_g2.iter_mut().enumerate() {
            *g += (0..ni).map(|j| s.x_g2[j * g2 + k] * resid_y[j]).sum::<f64>();
        }
        // C_iᵀ t = (t, x_g1 t_0)
        for k in 0..l {
            grad_rg1[k] += t[k];
        }
        for (k, x) in s.x_g1.iter().enumerate() {
            grad_rg1[l + k] += x * t[0];
        }
        for a in 0..l {
            for c in 0..l {
                scatter[a * l + c] += r[a] * r[c];
            }
        }
    }

    let log_det_w: f64 = (0..l).map(|i| omega[data.omega_map.diag_offset(i)]).sum();
    value += -beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * data.sigma2_beta)
        - omega.iter().map(|o| o * o).sum::<f64>() / (2.0 * data.sigma2_omega)
        + n as f64 * log_det_w;
    check_value(value, "GLMM log joint")?;
    if !want_grad {
        return Ok((value, grad));
    }

    for (k, &c) in data.random_cols.iter().chain(&data.subject_cols).enumerate() {
        grad[c] = grad_rg1[k] - beta[c] / data.sigma2_beta;
    }
    for (k, &c) in data.other_cols.iter().enumerate() {
        grad[c] = grad_g2[k] - beta[c] / data.sigma2_beta;
    }
    // ∇ω = −D_L* vech(S W) + n vech(I) − ω/σω², S = Σ r rᵀ
    let wd = w.to_dense();
    for (k, (row, col)) in data.omega_map.positions().enumerate() {
        let sw: f64 = (0..l).map(|m| scatter[row * l + m] * wd[m * l + col]).sum();
        let scale = if row == col { w.diag(row) } else { 1.0 };
        let ident = if row == col { n as f64 } else { 0.0 };
        grad[p + k] = -scale * sw + ident - omega[k] / data.sigma2_omega;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("GLMM gradient".into()));
    }
    Ok((value, grad))
}

impl Model for GlmmData {
    fn dims(&self) -> ModelDims {
        ModelDims::new(
            self.n_fixed() + self.n_omega(),
            self.n_subjects(),
            self.n_random(),
            0,
        )
    }

    fn log_joint(&self, theta: &[f64]) -> Result<f64> {
        glmm_log_joint(self, theta)
    }

    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>> {
        glmm_grad(self, theta)
    }

    fn log_joint_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        eval(self, theta, true)
    }

    fn global_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .column_names
            .iter()
            .map(|c| format!("beta_{c}"))
            .collect();
        labels.extend((1..=self.n_omega()).map(|k| format!("omega_{k}")));
        labels
    }

    fn local_labels(&self) -> Vec<String> {
        let l = self.n_random();
        self.subject_ids
            .iter()
            .flat_map(|id| {
                self.random_cols
                    .iter()
                    .take(l)
                    .map(move |&c| format!("b_{id}_{}", self.column_names[c]))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{fd_gradient, naive_glmm_log_joint, FdSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(family: GlmmFamily, n: usize, seed: u64) -> GlmmData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // columns: intercept, visit (random slope), trt (subject-level), age
        let names = ["(Intercept)", "visit", "trt", "age"].map(String::from).to_vec();
        let subjects = (0..n)
            .map(|i| {
                let ni = 3 + i % 2;
                let trt = (i % 2) as f64;
                let mut x = Vec::new();
                let mut y = Vec::new();
                for j in 0..ni {
                    x.extend([1.0, j as f64 * 0.2 - 0.3, trt, rng.random_range(-1.0..1.0)]);
                    y.push(match family {
                        GlmmFamily::Poisson => rng.random_range(0..6) as f64,
                        GlmmFamily::Bernoulli => rng.random_range(0..2) as f64,
                    });
                }
                SubjectRows {
                    id: format!("s{i}"),
                    y,
                    x,
                }
            })
            .collect();
        GlmmData::new(family, names, vec![0, 1], vec![2], subjects).unwrap()
    }

    fn random_theta(data: &GlmmData, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..data.dims().theta_dim())
            .map(|_| rng.random_range(-0.8..0.8))
            .collect()
    }

    #[test]
    fn single_observation_hand_value() {
        let data = GlmmData::new(
            GlmmFamily::Poisson,
            vec!["(Intercept)".into()],
            vec![0],
            vec![],
            vec![SubjectRows {
                id: "a".into(),
                y: vec![0.0],
                x: vec![1.0],
            }],
        )
        .unwrap();
        assert_eq!(data.dims(), ModelDims::new(2, 1, 1, 0));
        let v = glmm_log_joint(&data, &[0.0, 0.0, 0.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_at_zero_predictor() {
        let data = GlmmData::new(
            GlmmFamily::Bernoulli,
            vec!["(Intercept)".into()],
            vec![0],
            vec![],
            vec![SubjectRows {
                id: "a".into(),
                y: vec![1.0, 0.0, 1.0],
                x: vec![1.0, 1.0, 1.0],
            }],
        )
        .unwrap();
        let v = glmm_log_joint(&data, &[0.0; 3]).unwrap();
        assert!((v + 3.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ci_layout() {
        assert_eq!(build_ci(2, &[]), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(build_ci(1, &[0.7]), vec![1.0, 0.7]);
        assert_eq!(build_ci(2, &[0.7]), vec![1.0, 0.0, 0.7, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_theta_poisson_gradient_on_toy() {
        let data = GlmmData::new(
            GlmmFamily::Poisson,
            vec!["(Intercept)".into(), "x".into()],
            vec![0],
            vec![],
            vec![SubjectRows {
                id: "a".into(),
                y: vec![0.0, 0.0],
                x: vec![1.0, 0.5, 1.0, -2.0],
            }],
        )
        .unwrap();
        let g = glmm_grad(&data, &[0.0; 4]).unwrap();
        // β0 enters only through the centering: W Wᵀ r = 0
        assert_eq!(g[0], 0.0);
        // β_x: Σ x (0 − 1) = −(0.5 − 2)
        assert!((g[1] - 1.5).abs() < 1e-15);
        // ω: n vech(I) with r = 0
        assert!((g[2] - 1.0).abs() < 1e-15);
        // b̃: Σ z (0 − 1) = −2
        assert!((g[3] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in [GlmmFamily::Poisson, GlmmFamily::Bernoulli] {
            let data = toy(family, 4, 3);
            for _ in 0..20 {
                let theta = random_theta(&data, &mut rng);
                let v = glmm_log_joint(&data, &theta).unwrap();
                let naive = naive_glmm_log_joint(&data, &theta).unwrap();
                assert!((v - naive).abs() < 1e-10 * (1.0 + v.abs()));
                let grad = glmm_grad(&data, &theta).unwrap();
                let fd = fd_gradient(
                    |t| glmm_log_joint(&data, t).unwrap(),
                    &theta,
                    &FdSpec::default(),
                )
                .unwrap();
                for (a, b) in grad.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn prior_only_limit() {
        let data = toy(GlmmFamily::Poisson, 2, 5);
        let p = data.n_fixed();
        let nw = data.n_omega();
        let l = data.n_random();
        let mut theta = vec![0.0; data.dims().theta_dim()];
        let beta = [0.3, -0.2, 0.5, 0.1];
        theta[..p].copy_from_slice(&beta);
        theta[p] = 0.2;
        // b̃_i = C_i β_RG1 makes the quadratic term vanish
        for i in 0..data.n_subjects() {
            let ci = data.build_ci(i).unwrap();
            let brg1 = [beta[0], beta[1], beta[2]];
            for a in 0..l {
                theta[p + nw + i * l + a] = (0..3).map(|c| ci[a * 3 + c] * brg1[c]).sum();
            }
        }
        let g = glmm_grad(&data, &theta).unwrap();
        // ω block: n vech(I) − ω/σω² (likelihood does not involve ω)
        assert!((g[p] - (2.0 - 0.2 / 100.0)).abs() < 1e-12);
        assert!((g[p + 1] - 0.0).abs() < 1e-12);
        assert!((g[p + 2] - 2.0).abs() < 1e-12);
        // β_RG1 block reduces to the prior term
        for c in 0..3 {
            assert!((g[c] + beta[c] / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_to_subject_order() {
        let data = toy(GlmmFamily::Bernoulli, 3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = random_theta(&data, &mut rng);
        let mut rev = data.clone();
        rev.subjects.reverse();
        let p = data.n_fixed() + data.n_omega();
        let l = data.n_random();
        let mut theta_rev = theta[..p].to_vec();
        for i in (0..3).rev() {
            theta_rev.extend_from_slice(&theta[p + i * l..p + (i + 1) * l]);
        }
        let a = glmm_log_joint(&data, &theta).unwrap();
        let b = glmm_log_joint(&rev, &theta_rev).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn cross_subject_hessian_vanishes() {
        let data = toy(GlmmFamily::Poisson, 3, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let theta = random_theta(&data, &mut rng);
        let p = data.n_fixed() + data.n_omega();
        let l = data.n_random();
        let h = 1e-4;
        for a in 0..l {
            let i0 = p + a; // subject 0
            let base = glmm_grad(&data, &theta).unwrap();
            let mut tp = theta.clone();
            tp[i0] += h;
            let gp = glmm_grad(&data, &tp).unwrap();
            for j in 1..3 {
                for b in 0..l {
                    let k = p + j * l + b;
                    assert_eq!(gp[k] - base[k], 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_data() {
        let names = vec!["(Intercept)".to_string(), "trt".to_string()];
        let bad_intercept = SubjectRows {
            id: "a".into(),
            y: vec![1.0],
            x: vec![2.0, 0.0],
        };
        assert!(GlmmData::new(GlmmFamily::Poisson, names.clone(), vec![0], vec![], vec![bad_intercept]).is_err());
        let varying = SubjectRows {
            id: "a".into(),
            y: vec![1.0, 0.0],
            x: vec![1.0, 0.0, 1.0, 1.0],
        };
        assert!(GlmmData::new(GlmmFamily::Poisson, names.clone(), vec![0], vec![1], vec![varying]).is_err());
        let not_binary = SubjectRows {
            id: "a".into(),
            y: vec![2.0],
            x: vec![1.0, 0.0],
        };
        assert!(GlmmData::new(GlmmFamily::Bernoulli, names, vec![0], vec![], vec![not_binary]).is_err());
    }

    #[test]
    fn non_finite_theta_is_an_error() {
        let data = toy(GlmmFamily::Poisson, 2, 1);
        let mut theta = vec![0.0; data.dims().theta_dim()];
        theta[0] = f64::NAN;
        assert!(matches!(glmm_log_joint(&data, &theta), Err(Error::NonFinite(_))));
        theta[0] = 0.0;
        let last_intercept = theta.len() - data.n_random();
        theta[last_intercept] = 800.0;
        assert!(matches!(glmm_log_joint(&data, &theta), Err(Error::NonFinite(_))));
    }
}

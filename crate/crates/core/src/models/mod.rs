//! Models with global parameters `θG` and local latent blocks `b_1..b_n`.
//!
//! A model supplies `log p(y, θ)` (additive constants dropped) and its
//! gradient for `θ = (θG, b_1, …, b_n)`.

pub mod glmm;
pub mod svm;

use crate::error::Result;
pub use crate::family::FamilyDims as ModelDims;

pub use glmm::{build_ci, glmm_grad, glmm_log_joint, GlmmData, GlmmFamily};
pub use svm::{mean_correct, svm_grad, svm_log_joint, svm_natural, svm_transformed, SvmData};

pub trait Model: Sync {
    fn dims(&self) -> ModelDims;

    fn log_joint(&self, theta: &[f64]) -> Result<f64>;

    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn log_joint_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.log_joint(theta)?, self.grad_log_joint(theta)?))
    }

    /// Names of the global parameters, in θ order.
    fn global_labels(&self) -> Vec<String>;

    /// Names of the local variables, in θ order.
    fn local_labels(&self) -> Vec<String> {
        let dims = self.dims();
        if dims.l == 1 {
            (1..=dims.n).map(|i| format!("b_{i}")).collect()
        } else {
            (1..=dims.n)
                .flat_map(|i| (1..=dims.l).map(move |j| format!("b_{i}_{j}")))
                .collect()
        }
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn dims(&self) -> ModelDims {
        (**self).dims()
    }
    fn log_joint(&self, theta: &[f64]) -> Result<f64> {
        (**self).log_joint(theta)
    }
    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (**self).grad_log_joint(theta)
    }
    fn log_joint_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).log_joint_and_grad(theta)
    }
    fn global_labels(&self) -> Vec<String> {
        (**self).global_labels()
    }
    fn local_labels(&self) -> Vec<String> {
        (**self).local_labels()
    }
}

/// Numerically stable `log(1 + eˣ)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable `1 / (1 + e⁻ˣ)`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_theta(theta: &[f64], want: usize) -> Result<()> {
    use crate::error::Error;
    if theta.len() != want {
        return Err(Error::invalid(format!(
            "θ has length {}, expected {want}",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("θ".into()));
    }
    Ok(())
}

pub(crate) fn check_value(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(crate::error::Error::NonFinite(what.into()))
    }
}

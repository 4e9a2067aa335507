//! Conditionally structured Gaussian variational approximation (CSGVA).
//!
//! The posterior of a model with global parameters `θG` and local blocks
//! `b_1..b_n` is approximated by `q(θG) q(θL | θG)`, both Gaussian, where the
//! conditional mean and precision factor of the local part move linearly with
//! `θG`. The Gaussian variational approximation (GVA) is the special case with
//! a fixed conditional precision, and importance weighting tightens either fit.
//!
//! ```no_run
//! use csgva::models::SvmData;
//! use csgva::optimizer::{estimate_bound, fit, FitConfig};
//!
//! let data = SvmData::from_rates(&[1.52, 1.50, 1.53, 1.55, 1.51]).unwrap();
//! let report = fit(&data, None, &FitConfig::default()).unwrap();
//! let bound = estimate_bound(&report.lambda, &data, 1, 1000, 7).unwrap();
//! println!("{:.1} ({:.1})", bound.mean, bound.sd);
//! ```

pub mod bounds;
pub mod cli;
pub mod error;
pub mod family;
pub mod linalg;
pub mod models;
pub mod optimizer;
pub mod verify;

pub use error::{Error, Result};
pub use family::{Draw, FamilyDims, LambdaBlocks, LambdaGradient, VariationalParams};
pub use models::{Model, ModelDims};
pub use optimizer::{FitConfig, FitReport, Method};

//! Monte Carlo lower bounds and their λ-gradients.
//!
//! - [`elbo_estimate`]: `log p(y, θ) − log q_λ(θ)` at `θ = r_λ(s)`.
//! - [`iwlb_estimate`], [`renyi_bound`]: importance weighted and Rényi bounds over K draws.
//! - [`path_gradient`], [`total_gradient`], [`dreg_gradient`]: reparametrized gradient estimators.
//!
//! Multi-draw estimators evaluate draws in parallel and always combine them in
//! a fixed order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Draw, LambdaGradient, VariationalParams};
use crate::models::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Path,
    Total,
    Dreg,
}

/// A λ-gradient with the bound estimate from the same draws.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub gradient: LambdaGradient,
    pub estimator: Estimator,
    pub bound: f64,
}

/// Log importance weights `log w_k = log p(y, θ_k) − log q_λ(θ_k)` and their
/// softmax.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub log_weights: Vec<f64>,
    pub normalized: Vec<f64>,
    pub draws: Vec<Draw>,
}

impl WeightSet {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// `log (1/K) Σ w_k`.
    pub fn iwlb(&self) -> f64 {
        log_mean_exp(&self.log_weights)
    }
}

/// Per-draw pieces shared by every estimator.
struct Evaluated {
    draw: Draw,
    log_weight: f64,
    /// `∇θ log p − ∇θ log q`, present when gradients were requested.
    grad: Option<Vec<f64>>,
}

fn evaluate<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    s: &[f64],
    want_grad: bool,
) -> Result<Evaluated> {
    let draw = lambda.reparam(s)?;
    let theta = draw.theta();
    let log_q = lambda.log_density(&draw);
    let (log_p, grad) = if want_grad {
        let (log_p, mut gp) = model.log_joint_and_grad(&theta)?;
        let gq = lambda.grad_theta_log_density(&draw)?;
        for (a, b) in gp.iter_mut().zip(&gq) {
            *a -= b;
        }
        if gp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("θ-gradient of the log weight".into()));
        }
        (log_p, Some(gp))
    } else {
        (model.log_joint(&theta)?, None)
    };
    let log_weight = log_p - log_q;
    if !log_weight.is_finite() {
        return Err(Error::NonFinite("log importance weight".into()));
    }
    Ok(Evaluated {
        draw,
        log_weight,
        grad,
    })
}

fn evaluate_all<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    draws: &[Vec<f64>],
    want_grad: bool,
) -> Result<Vec<Evaluated>> {
    if draws.is_empty() {
        return Err(Error::invalid("at least one draw is required"));
    }
    if draws.len() == 1 {
        return Ok(vec![evaluate(lambda, model, &draws[0], want_grad)?]);
    }
    draws
        .par_iter()
        .map(|s| evaluate(lambda, model, s, want_grad))
        .collect()
}

fn jacobian(lambda: &VariationalParams, ev: &Evaluated) -> Result<LambdaGradient> {
    let g = ev.grad.as_ref().expect("gradient requested");
    let split = lambda.dims().g;
    lambda.apply_jacobian(&ev.draw, &g[..split], &g[split..])
}

/// `log (1/K) Σ exp(x_k)` with max shift. Terms are summed largest first, so
/// the value is exactly invariant to the order of `x`.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let max = sorted[0];
    if max == f64::INFINITY || max.is_nan() {
        return max;
    }
    let sum: f64 = sorted.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() - (x.len() as f64).ln()
}

/// Softmax of log weights.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let unnorm = sorted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    unnorm.into_iter().map(|v| v / total).collect()
}

/// Rényi bound from log weights; `alpha = 1` is the mean of the log weights.
pub fn renyi_from_log_weights(log_weights: &[f64], alpha: f64) -> f64 {
    if alpha == 1.0 {
        return log_weights.iter().sum::<f64>() / log_weights.len() as f64;
    }
    let scale = 1.0 - alpha;
    let scaled: Vec<f64> = log_weights.iter().map(|v| scale * v).collect();
    log_mean_exp(&scaled) / scale
}

/// One-sample ELBO estimate.
pub fn elbo_estimate<M: Model + ?Sized>(lambda: &VariationalParams, model: &M, s: &[f64]) -> Result<f64> {
    Ok(evaluate(lambda, model, s, false)?.log_weight)
}

/// Log weights, softmax weights and draws for `s_1..s_K`.
pub fn weight_set<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    draws: &[Vec<f64>],
) -> Result<WeightSet> {
    let evals = evaluate_all(lambda, model, draws, false)?;
    let log_weights: Vec<f64> = evals.iter().map(|e| e.log_weight).collect();
    Ok(WeightSet {
        normalized: normalize_log_weights(&log_weights),
        log_weights,
        draws: evals.into_iter().map(|e| e.draw).collect(),
    })
}

/// `L̂_K = log (1/K) Σ w_k`.
pub fn iwlb_estimate<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    draws: &[Vec<f64>],
) -> Result<f64> {
    let evals = evaluate_all(lambda, model, draws, false)?;
    let lw: Vec<f64> = evals.iter().map(|e| e.log_weight).collect();
    Ok(log_mean_exp(&lw))
}

/// `L̂_{α,K} = (1/(1−α)) log (1/K) Σ w_k^{1−α}`.
pub fn renyi_bound<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    draws: &[Vec<f64>],
    alpha: f64,
) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(Error::invalid("α must be finite"));
    }
    let evals = evaluate_all(lambda, model, draws, false)?;
    let lw: Vec<f64> = evals.iter().map(|e| e.log_weight).collect();
    Ok(renyi_from_log_weights(&lw, alpha))
}

/// Path derivative: `∇λ r_λ(s) (∇θ log p − ∇θ log q)`.
pub fn path_gradient<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    s: &[f64],
) -> Result<GradientEstimate> {
    let ev = evaluate(lambda, model, s, true)?;
    Ok(GradientEstimate {
        gradient: jacobian(lambda, &ev)?,
        estimator: Estimator::Path,
        bound: ev.log_weight,
    })
}

/// Total derivative: the path derivative minus the score `∇λ log q_λ(θ)`.
pub fn total_gradient<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    s: &[f64],
) -> Result<GradientEstimate> {
    let ev = evaluate(lambda, model, s, true)?;
    let path = jacobian(lambda, &ev)?;
    let score = lambda.score(&ev.draw)?;
    Ok(GradientEstimate {
        gradient: path.sub(&score),
        estimator: Estimator::Total,
        bound: ev.log_weight,
    })
}

/// Doubly reparametrized IWLB gradient `Σ w̃_k² ∇λ r_λ(s_k) ∇θ log w_k`.
pub fn dreg_gradient<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    draws: &[Vec<f64>],
) -> Result<GradientEstimate> {
    let evals = evaluate_all(lambda, model, draws, true)?;
    let lw: Vec<f64> = evals.iter().map(|e| e.log_weight).collect();
    let weights = normalize_log_weights(&lw);
    let parts: Vec<LambdaGradient> = if evals.len() == 1 {
        vec![jacobian(lambda, &evals[0])?]
    } else {
        evals
            .par_iter()
            .map(|e| jacobian(lambda, e))
            .collect::<Result<_>>()?
    };
    let mut gradient = LambdaGradient::zeros_like(lambda);
    for (w, part) in weights.iter().zip(&parts) {
        gradient.add_scaled(w * w, part);
    }
    Ok(GradientEstimate {
        gradient,
        estimator: Estimator::Dreg,
        bound: log_mean_exp(&lw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{FamilyDims, LambdaBlocks};
    use crate::linalg::{IndexMap, LowerTri};
    use crate::models::SvmData;
    use crate::verify::{fd_gradient, mc_mean_test, FdSpec, GaussianTarget, Welford};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn normals(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn random_lambda(dims: FamilyDims, scale: f64, seed: u64) -> VariationalParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = VariationalParams::zeros(dims, false).unwrap();
        let values = (0..lambda.len()).map(|_| rng.random_range(-scale..scale)).collect();
        lambda.with_values(values).unwrap()
    }

    /// A Gaussian target together with the λ that reproduces it exactly.
    fn exact_pair() -> (GaussianTarget, VariationalParams) {
        let dims = FamilyDims::new(1, 2, 1, 1);
        let mu_g = [0.4];
        let mu_l = [-0.2, 0.9];
        let local = Arc::new(IndexMap::banded(2, 1, 1).unwrap());
        let t_ll = LowerTri::new(local, vec![1.3, -0.4, 0.8]).unwrap();
        let t_gg = LowerTri::new(Arc::new(IndexMap::dense(1).unwrap()), vec![0.7]).unwrap();
        let t_gl = [0.25, -0.1];
        let lambda = VariationalParams::from_gva(dims, &mu_g, &mu_l, &t_gg, &t_gl, &t_ll).unwrap();
        // T over (θL, θG) is [[TLL, 0], [TGL, TGG]]; permute its precision to θ order.
        let t = [
            1.3, 0.0, 0.0, //
            -0.4, 0.8, 0.0, //
            0.25, -0.1, 0.7,
        ];
        let perm = [2, 0, 1];
        let mut prec = [0.0; 9];
        for a in 0..3 {
            for b in 0..3 {
                let (pa, pb) = (perm[a], perm[b]);
                prec[a * 3 + b] = (0..3).map(|k| t[pa * 3 + k] * t[pb * 3 + k]).sum();
            }
        }
        let chol = crate::verify::dense_cholesky(&prec, 3).unwrap();
        let target = GaussianTarget::new(dims, vec![0.4, -0.2, 0.9], chol, -3.25).unwrap();
        (target, lambda)
    }

    #[test]
    fn log_mean_exp_values() {
        assert_eq!(log_mean_exp(&[0.3]), 0.3);
        let v = log_mean_exp(&[0.0, 2f64.ln()]);
        assert!((v - 1.5f64.ln()).abs() < 1e-15);
        let big = log_mean_exp(&[1000.0, 1000.0]);
        assert_eq!(big, 1000.0);
        assert_eq!(log_mean_exp(&[1.0, 5.0, -2.0]), log_mean_exp(&[-2.0, 1.0, 5.0]));
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let w = normalize_log_weights(&[-700.0, 3.0, 2.0, 0.5]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] >= 0.0 && w[1] > w[2]);
    }

    #[test]
    fn renyi_limits_and_monotonicity() {
        let lw = [-1.0, 0.5, -3.0, 2.0];
        assert_eq!(renyi_from_log_weights(&lw, 0.0).to_bits(), log_mean_exp(&lw).to_bits());
        assert!((renyi_from_log_weights(&lw, 1.0) + 0.375).abs() < 1e-15);
        let near = renyi_from_log_weights(&lw, 1.0 - 1e-7);
        assert!((near + 0.375).abs() < 1e-5);
        let alphas = [-1.0, 0.0, 0.5, 1.0, 2.0];
        for w in alphas.windows(2) {
            assert!(renyi_from_log_weights(&lw, w[0]) > renyi_from_log_weights(&lw, w[1]));
        }
    }

    #[test]
    fn exact_family_has_zero_variance() {
        let (target, lambda) = exact_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = normals(3, &mut rng);
            let e = elbo_estimate(&lambda, &target, &s).unwrap();
            assert!((e - target.log_evidence).abs() < 1e-12);
            let g = path_gradient(&lambda, &target, &s).unwrap();
            assert!(g.gradient.values().iter().all(|v| v.abs() < 1e-12));
            let draws: Vec<Vec<f64>> = (0..4).map(|_| normals(3, &mut rng)).collect();
            let iw = iwlb_estimate(&lambda, &target, &draws).unwrap();
            assert!((iw - target.log_evidence).abs() < 1e-12);
            let dreg = dreg_gradient(&lambda, &target, &draws).unwrap();
            assert!(dreg.gradient.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn single_draw_collapses() {
        let dims = FamilyDims::new(3, 4, 1, 1);
        let lambda = random_lambda(dims, 0.3, 1);
        let data = SvmData::new(vec![0.5, -1.2, 0.3, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s = normals(7, &mut rng);
            let elbo = elbo_estimate(&lambda, &data, &s).unwrap();
            let iw = iwlb_estimate(&lambda, &data, std::slice::from_ref(&s)).unwrap();
            assert_eq!(elbo.to_bits(), iw.to_bits());
            let path = path_gradient(&lambda, &data, &s).unwrap();
            let dreg = dreg_gradient(&lambda, &data, std::slice::from_ref(&s)).unwrap();
            assert_eq!(path.gradient.values(), dreg.gradient.values());
        }
    }

    #[test]
    fn total_is_path_minus_score() {
        let dims = FamilyDims::new(3, 5, 1, 1);
        let lambda = random_lambda(dims, 0.3, 4);
        let data = SvmData::new(vec![0.5, -1.2, 0.3, 0.8, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = normals(8, &mut rng);
        let total = total_gradient(&lambda, &data, &s).unwrap();
        let path = path_gradient(&lambda, &data, &s).unwrap();
        let draw = lambda.reparam(&s).unwrap();
        let score = lambda.score(&draw).unwrap();
        for ((t, p), q) in total.gradient.values().iter().zip(path.gradient.values()).zip(score.values()) {
            assert!((t - (p - q)).abs() < 1e-12 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let dims = FamilyDims::new(3, 5, 1, 1);
        let data = SvmData::new(vec![0.5, -1.2, 0.3, 0.8, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for seed in 0..5 {
            let lambda = random_lambda(dims, 0.3, seed);
            let s = normals(8, &mut rng);
            let total = total_gradient(&lambda, &data, &s).unwrap();
            let f = |v: &[f64]| {
                let l = lambda.with_values(v.to_vec()).unwrap();
                elbo_estimate(&l, &data, &s).unwrap()
            };
            let fd = fd_gradient(f, lambda.values(), &FdSpec::default()).unwrap();
            for (a, b) in total.gradient.values().iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gaussian_elbo_matches_analytic_kl() {
        // q = N(0, 1), p(y, θ) = e^c N(θ; m, v): ELBO = c − KL(q‖N(m, v))
        let dims = FamilyDims::new(1, 1, 1, 0);
        let target = GaussianTarget::diagonal(dims, vec![0.5, -0.3], &[2.0, 0.5], 1.7).unwrap();
        let lambda = VariationalParams::zeros(dims, false).unwrap();
        let kl = |m: f64, sd: f64| (sd.ln()) + (1.0 + m * m) / (2.0 * sd * sd) - 0.5;
        let expected = 1.7 - kl(0.5, 2.0) - kl(-0.3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = Welford::default();
        for _ in 0..100_000 {
            acc.push(elbo_estimate(&lambda, &target, &normals(2, &mut rng)).unwrap());
        }
        assert!((acc.mean - expected).abs() < 3.0 * acc.se() + 1e-3, "{} vs {expected}", acc.mean);
    }

    #[test]
    fn path_and_total_agree_in_mean() {
        let dims = FamilyDims::new(1, 2, 1, 1);
        let lambda = random_lambda(dims, 0.4, 11);
        let target = GaussianTarget::diagonal(dims, vec![0.3, -0.5, 0.2], &[0.8, 1.2, 0.6], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dim = lambda.len();
        let res = mc_mean_test(
            || {
                let s = normals(3, &mut rng);
                let t = total_gradient(&lambda, &target, &s).unwrap();
                let p = path_gradient(&lambda, &target, &s).unwrap();
                t.gradient.sub(&p.gradient).into_values()
            },
            dim,
            100_000,
            &vec![0.0; dim],
        )
        .unwrap();
        assert!(res.pass, "{:?}", res.z);
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let dims = FamilyDims::new(3, 6, 1, 1);
        let lambda = random_lambda(dims, 0.3, 21);
        let data = SvmData::new(vec![0.5, -1.2, 0.3, 0.8, 0.1, -0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let draws: Vec<Vec<f64>> = (0..20).map(|_| normals(9, &mut rng)).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| dreg_gradient(&lambda, &data, &draws).unwrap());
        let b = four.install(|| dreg_gradient(&lambda, &data, &draws).unwrap());
        assert_eq!(a.bound.to_bits(), b.bound.to_bits());
        assert_eq!(a.gradient.values(), b.gradient.values());
        let mut shuffled = draws.clone();
        shuffled.reverse();
        let c = iwlb_estimate(&lambda, &data, &shuffled).unwrap();
        assert_eq!(c.to_bits(), a.bound.to_bits());
    }

    #[test]
    fn weight_set_is_consistent() {
        let dims = FamilyDims::new(3, 3, 1, 1);
        let lambda = random_lambda(dims, 0.3, 31);
        let data = SvmData::new(vec![0.5, -1.2, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let draws: Vec<Vec<f64>> = (0..5).map(|_| normals(6, &mut rng)).collect();
        let ws = weight_set(&lambda, &data, &draws).unwrap();
        assert_eq!(ws.len(), 5);
        assert!((ws.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(ws.iwlb(), iwlb_estimate(&lambda, &data, &draws).unwrap());
        assert_eq!(ws.draws[2].s(), draws[2]);
        assert!(iwlb_estimate(&lambda, &data, &[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn log_weight_invariants(
            lw in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -100.0f64..100.0,
            alpha in 0.05f64..0.95,
        ) {
            let l = log_mean_exp(&lw);
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = lw.iter().cloned().fold(f64::INFINITY, f64::min);
            proptest::prop_assert!(l <= max + 1e-12 && l >= min - 1e-12);
            let mut rev = lw.clone();
            rev.reverse();
            proptest::prop_assert_eq!(l.to_bits(), log_mean_exp(&rev).to_bits());
            let shifted: Vec<f64> = lw.iter().map(|v| v + shift).collect();
            proptest::prop_assert!((log_mean_exp(&shifted) - l - shift).abs() < 1e-9);
            let w = normalize_log_weights(&lw);
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let r = renyi_from_log_weights(&lw, alpha);
            let mean = lw.iter().sum::<f64>() / lw.len() as f64;
            proptest::prop_assert!(r <= l + 1e-9 && r >= mean - 1e-9);
        }
    }
}

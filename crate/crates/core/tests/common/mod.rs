#![allow(dead_code)]

use csgva::models::glmm::SubjectRows;
use csgva::models::{GlmmData, GlmmFamily, SvmData};
use csgva::{FamilyDims, VariationalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// λ with every entry uniform on `(−scale, scale)`.
pub fn random_lambda(dims: FamilyDims, scale: f64, rng: &mut ChaCha8Rng) -> VariationalParams {
    let lambda = VariationalParams::zeros(dims, false).unwrap();
    let values = (0..lambda.len()).map(|_| rng.random_range(-scale..scale)).collect();
    lambda.with_values(values).unwrap()
}

/// Small GLMM: intercept and `x` (random), `trt` (subject level), `w` (other).
pub fn toy_glmm(family: GlmmFamily, n: usize, random_slope: bool, seed: u64) -> GlmmData {
    let mut rng = rng(seed);
    let names = ["(Intercept)", "x", "trt", "w"].map(String::from).to_vec();
    let subjects = (0..n)
        .map(|i| {
            let trt = (i % 2) as f64;
            let ni = 2 + i % 3;
            let mut x = Vec::new();
            let mut y = Vec::new();
            for _ in 0..ni {
                x.extend([1.0, rng.random_range(-0.5..0.5), trt, rng.random_range(-1.0..1.0)]);
                y.push(match family {
                    GlmmFamily::Poisson => rng.random_range(0..5) as f64,
                    GlmmFamily::Bernoulli => rng.random_range(0..2) as f64,
                });
            }
            SubjectRows { id: format!("s{}", i + 1), y, x }
        })
        .collect();
    let random = if random_slope { vec![0, 1] } else { vec![0] };
    GlmmData::new(family, names, random, vec![2], subjects).unwrap()
}

/// Poisson GLMM simulated from known parameters.
///
/// Design `[1, visit, trt, age]`: random intercept and visit slope, `trt`
/// constant within subject. Returns the data and `β` in design order.
pub fn simulate_glmm(n: usize, ni: usize, seed: u64) -> (GlmmData, Vec<f64>) {
    let mut rng = rng(seed);
    let beta = vec![0.8, -0.5, 0.4, 0.3];
    let sd = [0.4, 0.3];
    let names = ["(Intercept)", "visit", "trt", "age"].map(String::from).to_vec();
    let visits: Vec<f64> = (0..ni).map(|j| -0.3 + 0.6 * j as f64 / (ni.max(2) - 1) as f64).collect();
    let subjects = (0..n)
        .map(|i| {
            let trt = (i % 2) as f64;
            let u0 = sd[0] * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let u1 = sd[1] * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let mut x = Vec::new();
            let mut y = Vec::new();
            for &v in &visits {
                let age = rng.random_range(-1.0..1.0);
                let eta = beta[0] + u0 + (beta[1] + u1) * v + beta[2] * trt + beta[3] * age;
                x.extend([1.0, v, trt, age]);
                y.push(Poisson::new(eta.exp()).unwrap().sample(&mut rng));
            }
            SubjectRows { id: format!("p{}", i + 1), y, x }
        })
        .collect();
    let data = GlmmData::new(GlmmFamily::Poisson, names, vec![0, 1], vec![2], subjects).unwrap();
    (data, beta)
}

/// Stochastic volatility series simulated from `(σ, κ, φ)`.
pub fn simulate_svm(n: usize, sigma: f64, kappa: f64, phi: f64, seed: u64) -> SvmData {
    let mut rng = rng(seed);
    let stationary = Normal::new(0.0, (1.0 / (1.0 - phi * phi)).sqrt()).unwrap();
    let mut b = stationary.sample(&mut rng);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            b = phi * b + Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        let sd = (0.5 * (sigma * b + kappa)).exp();
        y.push(sd * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    }
    SvmData::new(y).unwrap()
}

/// Writes a synthetic exchange-rate series with the given volatility model.
pub fn write_rates_csv(path: &std::path::Path, n: usize, seed: u64) {
    let data = simulate_svm(n, 0.3, -1.0, 0.95, seed);
    let mut rate: f64 = 1.5;
    let mut out = String::from("rate\n");
    out.push_str(&format!("{rate}\n"));
    for y in data.y() {
        rate *= (y / 100.0).exp();
        out.push_str(&format!("{rate}\n"));
    }
    std::fs::write(path, out).unwrap();
}

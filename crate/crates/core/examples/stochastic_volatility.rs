//! Stochastic volatility fitted to a simulated return series.

use csgva::cli::sample_posterior;
use csgva::models::{svm_natural, SvmData};
use csgva::optimizer::{fit, Init};
use csgva::FitConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> csgva::Result<()> {
    let (sigma, kappa, phi) = (0.3, -1.0, 0.95);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut noise = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut b = noise() / (1.0f64 - phi * phi).sqrt();
    let mut y = Vec::new();
    for t in 0..300 {
        if t > 0 {
            b = phi * b + noise();
        }
        y.push((0.5 * (sigma * b + kappa)).exp() * noise());
    }
    let model = SvmData::new(y)?;

    // A Gaussian fit first, then the conditional family from there.
    let config = FitConfig { init: Init::FromGva, seed: 4, ..FitConfig::default() };
    let report = fit(&model, None, &config)?;
    for stage in &report.stages {
        println!("{:?} stage: {} iterations", stage.method, stage.iterations);
    }
    println!("{:?} stage: {} iterations", report.method, report.iterations);

    let summary = sample_posterior(&report.lambda, &model, 4000, 5, true)?;
    let natural: Vec<(f64, f64, f64)> = summary
        .samples
        .unwrap_or_default()
        .iter()
        .map(|t| svm_natural(t[0], t[1], t[2]))
        .collect();
    let mean = |f: fn(&(f64, f64, f64)) -> f64| natural.iter().map(f).sum::<f64>() / natural.len() as f64;
    println!("σ {:.3} (truth {sigma})", mean(|t| t.0));
    println!("κ {:.3} (truth {kappa})", mean(|t| t.1));
    println!("φ {:.3} (truth {phi})", mean(|t| t.2));
    Ok(())
}

//! Importance-weighted refinement after a CSGVA fit.

use csgva::models::SvmData;
use csgva::optimizer::estimate_bound;
use csgva::{optimizer, FitConfig, Method};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> csgva::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut noise = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut b = 0.0;
    let y: Vec<f64> = (0..150)
        .map(|_| {
            b = 0.9 * b + noise();
            (0.5 * (0.4 * b - 0.5)).exp() * noise()
        })
        .collect();
    let model = SvmData::new(y)?;

    let config = FitConfig { method: Method::Iw, k: 5, seed: 2, ..FitConfig::default() };
    let report = optimizer::fit(&model, None, &config)?;
    let csgva_stage = report.stages.last().expect("iw runs after csgva");
    println!("csgva: {} iterations, iw: {} iterations", csgva_stage.iterations, report.iterations);

    for k in [1, 5] {
        let b = estimate_bound(&report.lambda, &model, k, 400, 3)?;
        println!("K = {k:>2}: bound {:.3} (sd {:.3})", b.mean, b.sd);
    }
    Ok(())
}

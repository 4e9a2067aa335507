//! Poisson random-intercept-and-slope model fitted to simulated counts.

use csgva::cli::sample_posterior;
use csgva::models::glmm::SubjectRows;
use csgva::models::{GlmmData, GlmmFamily};
use csgva::optimizer::{estimate_bound, fit};
use csgva::FitConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn main() -> csgva::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let beta = [0.6, -0.4, 0.5];
    let u = Normal::new(0.0, 0.4).unwrap();
    let names = ["(Intercept)", "visit", "trt"].map(String::from).to_vec();

    let subjects: Vec<SubjectRows> = (0..40)
        .map(|i| {
            let trt = (i % 2) as f64;
            let (u0, u1) = (u.sample(&mut rng), 0.5 * u.sample(&mut rng));
            let mut rows = SubjectRows { id: format!("id{i}"), y: Vec::new(), x: Vec::new() };
            for visit in [-0.3, -0.1, 0.1, 0.3] {
                let eta = beta[0] + u0 + (beta[1] + u1) * visit + beta[2] * trt;
                rows.x.extend([1.0, visit, trt]);
                rows.y.push(Poisson::new(eta.exp()).unwrap().sample(&mut rng));
            }
            rows
        })
        .collect();
    // Random intercept and visit slope; treatment is fixed within subject.
    let data = GlmmData::new(GlmmFamily::Poisson, names, vec![0, 1], vec![2], subjects)?;

    let config = FitConfig { seed: 1, ..FitConfig::default() };
    let report = fit(&data, None, &config)?;
    println!("{} iterations, stopped by {:?}", report.iterations, report.stop_reason);

    let summary = sample_posterior(&report.lambda, &data, 4000, 2, false)?;
    for (p, truth) in summary.global.iter().zip(beta) {
        println!("{:<18} {:>7.3} ± {:.3}   (truth {truth})", p.label, p.mean, p.sd);
    }
    let bound = estimate_bound(&report.lambda, &data, 1, 500, 3)?;
    println!("ELBO {:.2} (sd {:.2})", bound.mean, bound.sd);
    Ok(())
}

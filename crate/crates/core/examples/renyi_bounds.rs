//! Rényi bounds between the IWLB (α = 0) and the averaged ELBO (α = 1).

use csgva::bounds::{iwlb_estimate, renyi_bound, weight_set};
use csgva::verify::GaussianTarget;
use csgva::{FamilyDims, VariationalParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> csgva::Result<()> {
    let dims = FamilyDims::new(1, 2, 1, 1);
    let target = GaussianTarget::diagonal(dims, vec![0.8, -0.5, 0.2], &[0.6, 1.5, 0.9], -2.0)?;
    let lambda = VariationalParams::zeros(dims, false)?;
    println!("log p(y) = {}", target.log_evidence);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("α = {alpha:.2}: {:.4}", renyi_bound(&lambda, &target, &draws, alpha)?);
    }
    println!("IWLB      : {:.4}", iwlb_estimate(&lambda, &target, &draws)?);

    let w = weight_set(&lambda, &target, &draws)?;
    let ess = 1.0 / w.normalized.iter().map(|v| v * v).sum::<f64>();
    println!("effective sample size {ess:.1} of {}", w.len());
    Ok(())
}

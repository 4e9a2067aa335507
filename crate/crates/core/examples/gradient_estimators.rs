//! Variance of the path, total and doubly reparametrized gradient estimators.

use csgva::bounds::{dreg_gradient, path_gradient, total_gradient};
use csgva::verify::{GaussianTarget, Welford};
use csgva::{FamilyDims, VariationalParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> csgva::Result<()> {
    let dims = FamilyDims::new(1, 2, 1, 1);
    let target = GaussianTarget::diagonal(dims, vec![0.2, 0.1, -0.1], &[0.9, 1.1, 1.0], 0.0)?;
    let lambda = VariationalParams::zeros(dims, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut normals = || -> Vec<f64> { (0..3).map(|_| StandardNormal.sample(&mut rng)).collect() };

    let mut stats = [Welford::default(), Welford::default(), Welford::default()];
    for _ in 0..5000 {
        let s = normals();
        let iw: Vec<Vec<f64>> = (0..5).map(|_| normals()).collect();
        let grads = [
            path_gradient(&lambda, &target, &s)?,
            total_gradient(&lambda, &target, &s)?,
            dreg_gradient(&lambda, &target, &iw)?,
        ];
        for (w, g) in stats.iter_mut().zip(grads) {
            // Gradient with respect to μ1.
            w.push(g.gradient.into_values()[0]);
        }
    }
    for (name, w) in ["path", "total", "dreg K=5"].iter().zip(&stats) {
        println!("{name:<9} mean {:>7.4}  sd {:.4}", w.mean, w.sd());
    }
    Ok(())
}

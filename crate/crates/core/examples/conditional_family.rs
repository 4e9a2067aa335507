//! Sampling from the conditional family and evaluating its density.

use csgva::{FamilyDims, LambdaBlocks, VariationalParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> csgva::Result<()> {
    // Two globals, three subjects with two local effects each.
    let dims = FamilyDims::new(2, 3, 2, 0);
    let mut lambda = VariationalParams::zeros(dims, false)?;
    let layout = lambda.layout();
    println!("λ has {} entries; F block {:?}", lambda.len(), layout.fmat());

    // Let the local scale depend on the first global.
    for (i, v) in lambda.values_mut()[layout.fmat()].iter_mut().enumerate() {
        if i % 2 == 0 {
            *v = 0.3;
        }
    }
    lambda.values_mut()[layout.mu1()].copy_from_slice(&[0.5, -1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let s: Vec<f64> = (0..dims.theta_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let draw = lambda.reparam(&s)?;
        let back = lambda.inverse_reparam(&draw.theta())?;
        println!(
            "θG = {:>7.3?}  log q = {:>8.3}  round trip {:.1e}",
            draw.theta_g,
            lambda.log_density(&draw),
            back.s().iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        );
    }

    let theta_g = [0.0, 0.0];
    let c2 = lambda.conditional_factor(&theta_g);
    println!("C2 at θG = 0 has {} stored entries", c2.values().len());
    Ok(())
}

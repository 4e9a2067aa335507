//! Finite-difference checks of model and variational gradients.

use csgva::bounds::{elbo_estimate, total_gradient};
use csgva::models::SvmData;
use csgva::verify::{compare_gradients, fd_gradient, FdSpec};
use csgva::{LambdaBlocks, Model, VariationalParams};

fn main() -> csgva::Result<()> {
    let model = SvmData::new(vec![0.4, -1.2, 0.3, 2.1, -0.7, 0.1])?;
    let dims = model.dims();
    let theta: Vec<f64> = (0..dims.theta_dim()).map(|i| 0.1 * i as f64 - 0.3).collect();

    let spec = FdSpec::default();
    let analytic = model.grad_log_joint(&theta)?;
    let fd = fd_gradient(|x| model.log_joint(x).unwrap_or(f64::NAN), &theta, &spec)?;
    compare_gradients(&analytic, &fd, spec.rel_tol, spec.abs_floor)?;
    println!("∇θ log p agrees on {} coordinates", theta.len());

    let lambda = {
        let zero = VariationalParams::zeros(dims, false)?;
        let values = (0..zero.len()).map(|i| 0.05 * ((i * 7 % 11) as f64 - 5.0)).collect();
        zero.with_values(values)?
    };
    let s: Vec<f64> = (0..dims.theta_dim()).map(|i| (i as f64 * 0.7).sin()).collect();
    let g = total_gradient(&lambda, &model, &s)?.gradient.into_values();
    let fd = fd_gradient(
        |x| {
            let l = lambda.with_values(x.to_vec()).unwrap();
            elbo_estimate(&l, &model, &s).unwrap_or(f64::NAN)
        },
        lambda.values(),
        &spec,
    )?;
    compare_gradients(&g, &fd, 1e-5, 0.0)?;
    println!("∇λ of the one-sample ELBO agrees on {} coordinates", g.len());
    Ok(())
}

//! Block-banded lower-triangular factors stored over their sparsity pattern.

use std::sync::Arc;

use csgva::linalg::{build_pattern, dstar_scale, star_to_factor, LowerTri};

fn main() -> csgva::Result<()> {
    // Five scalar states with a first-order Markov band.
    let map = Arc::new(build_pattern(5, 1, 1)?);
    println!("pattern size {} (2n - 1 = 9)", map.len());
    for (row, col) in map.positions() {
        print!("({row},{col}) ");
    }
    println!();

    // Star form: log diagonal, free off-diagonal.
    let star: Vec<f64> = map
        .positions()
        .map(|(r, c)| if r == c { 0.1 * r as f64 } else { -0.3 })
        .collect();
    let t = star_to_factor(&LowerTri::new(map.clone(), star)?);

    let b = [1.0, -2.0, 0.5, 3.0, 0.0];
    let x = t.solve_lower(&b)?;
    let back = t.mul_lower(&x)?;
    println!("T x = b residual {:.1e}", max_abs_diff(&back, &b));

    let y = t.solve_upper_transpose(&b)?;
    let back = t.mul_upper_transpose(&y)?;
    println!("T' y = b residual {:.1e}", max_abs_diff(&back, &b));
    println!("log det T = {:.4}", t.log_det());

    let ones = vec![1.0; map.len()];
    println!("D* scaling of ones: {:?}", dstar_scale(&t, &ones)?);
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

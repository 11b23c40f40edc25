//! Newton's method with a Kantorovich certificate on a small nonlinear
//! system: the circle x² + y² = 4 intersected with the curve y = x³.

use stereogap::critical_points::{newton_kantorovich_solve, FnField, NewtonOptions};
use stereogap::linalg::Matrix;

fn main() -> stereogap::Result<()> {
    let field = FnField {
        dim: 2,
        value: |p: &[f64]| vec![p[0] * p[0] + p[1] * p[1] - 4.0, p[1] - p[0].powi(3)],
        jacobian: |p: &[f64]| {
            Matrix::from_rows(&[vec![2.0 * p[0], 2.0 * p[1]], vec![-3.0 * p[0] * p[0], 1.0]]).expect("2x2")
        },
    };
    for (start, radius) in [([1.0, 1.0], 0.5), ([1.2, 1.7], 0.2), ([-0.3, 0.1], 0.1)] {
        match newton_kantorovich_solve(&field, &start, radius, &NewtonOptions::default()) {
            Ok(out) => println!(
                "start {start:?}: root ({:.6}, {:.6}) in {} iterations, |G| = {:.1e}, certified in radius {radius}: {}",
                out.root[0], out.root[1], out.iterations, out.residual, out.certificate.certified
            ),
            Err(e) => println!("start {start:?}: {e}"),
        }
    }
    Ok(())
}

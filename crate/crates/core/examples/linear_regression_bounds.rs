//! Least squares with a small, shifted minority group: closed-form
//! minimizers, the gap bound, the distance between the majority and full
//! gradient-flow curves, and a ball on which the minority gradient points
//! against the full gradient.

use stereogap::critical_points::{linear_closed_forms, linear_gap_bound};
use stereogap::flow::{curve_distance_bound, minority_adverse_ball};
use stereogap::harness::{generate_dataset, DatasetSpec, RegressionSpec};
use stereogap::linalg::distance;
use stereogap::loss_models::make_quadratic;

fn main() -> stereogap::Result<()> {
    let spec = DatasetSpec::LinearRegressionSynthetic(RegressionSpec {
        dim: 3,
        majority_size: 40,
        reference: None,
        imbalance: 0.05,
        coefficients_majority: vec![1.0, -0.5, 0.25],
        coefficients_minority: vec![-1.0, 0.5, 2.0],
        noise: 0.1,
        minority_scale: 1.0,
    });
    let data = generate_dataset(&spec, 11)?;
    println!("n1 = {}, n0 = {}", data.n1(), data.n0());
    let model = make_quadratic(data, 0.01, vec![0.0; 3])?;

    let forms = linear_closed_forms(&model)?;
    println!("full minimizer     {:?}", forms.theta_hat);
    println!("majority minimizer {:?}", forms.theta_hat1);
    println!("minority minimizer {:?}", forms.theta_hat0);

    let gap = linear_gap_bound(&model)?;
    println!("gap {:.4} <= bound {:.4}: {}", gap.actual_gap, gap.bound, gap.holds);

    let init = vec![2.0, 2.0, -2.0];
    let curves = curve_distance_bound(&model, &init, 5_000)?;
    println!(
        "curve distance sup {:.4} <= bound {:.4}: {}",
        curves.empirical_sup, curves.sup_bound, curves.holds
    );

    let ball = minority_adverse_ball(&model, 200, 11)?;
    println!(
        "adverse ball: radius {:.2e} at distance {:.4} from the full minimizer, verified on {} samples: {}",
        ball.radius,
        distance(&ball.center, &forms.theta_hat),
        ball.samples,
        ball.verified
    );
    Ok(())
}

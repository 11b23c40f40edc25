//! Runs the majority flow to its minimizer, then switches to the full
//! loss and counts the steps needed to close the gap.

use stereogap::critical_points::{auto_region, SearchOptions};
use stereogap::harness::{debias_protocol, generate_dataset, DatasetSpec, DebiasOptions, RegressionSpec};
use stereogap::loss_models::{make_quadratic, Part};

fn main() -> stereogap::Result<()> {
    let data = generate_dataset(
        &DatasetSpec::LinearRegressionSynthetic(RegressionSpec {
            dim: 2,
            majority_size: 60,
            reference: None,
            imbalance: 0.02,
            coefficients_majority: vec![1.0, 1.0],
            coefficients_minority: vec![0.5, 1.5],
            noise: 0.1,
            minority_scale: 1.0,
        }),
        5,
    )?;
    let model = make_quadratic(data, 0.01, vec![0.0, 0.0])?;
    let anchor = model.minimizer(Part::Majority)?;
    let region = auto_region(&model, &anchor, 0.25, 6, 21, &SearchOptions::default())?;
    println!("certified region half-width: {}", region.half_width);

    let report = debias_protocol(
        &model,
        &[3.0, -1.0],
        &DebiasOptions {
            tol: 1e-10,
            ..DebiasOptions::default()
        },
        Some(&region.report.constants),
    )?;
    println!("status: {:?}", report.status);
    println!(
        "stereotype     {:?} after {} steps",
        report.stereotype, report.stereotype_steps
    );
    println!(
        "representative {:?} after {} steps",
        report.representative, report.representative_steps
    );
    println!(
        "distance {:.5} (bound {:?}), 99% of it closed after {:?} steps",
        report.distance, report.gap_bound, report.debias_steps_99pct
    );
    Ok(())
}

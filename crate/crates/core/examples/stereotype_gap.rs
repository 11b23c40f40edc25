//! Certified stereotype gap on a one-dimensional double well: estimate
//! the region constants, locate the critical points of the majority and
//! full losses, pair them and compare their distance to the bound.

use stereogap::critical_points::{estimate_constants, stereotype_gap, RegionBox, SearchOptions};
use stereogap::loss_models::make_double_well;

fn main() -> stereogap::Result<()> {
    let model = make_double_well(1e-3, 0.5)?;
    let region = RegionBox::new(vec![-1.6], vec![1.6])?;
    let constants = estimate_constants(&model, &region, 321, None)?;
    println!(
        "delta = {:.4}  c = {:.4}  M = {:.4}  tau = {:.2e}",
        constants.delta, constants.c, constants.m, constants.tau
    );
    println!(
        "threshold = {:.3e}  condition holds: {}",
        constants.threshold(),
        constants.condition_holds()
    );

    let report = stereotype_gap(&model, &region, &constants, &SearchOptions::default())?;
    for pair in &report.pairs {
        println!(
            "L1 point {:>9.5} (index {})  ->  L point {:>9.5}   distance {:.3e}",
            pair.stereotypical.location[0],
            pair.stereotypical.morse_index,
            pair.representative.location[0],
            pair.distance
        );
    }
    println!(
        "hausdorff = {:.3e}  bound 4 tau/delta = {:.3e}  boundary ok: {:?}  certified: {}",
        report.hausdorff.unwrap_or(f64::NAN),
        report.bound,
        report.constants.boundary_ok,
        report.certified
    );
    Ok(())
}

//! Training zones of the toy loss on a grid: where the majority and
//! minority gradients pull with or against the full gradient. Prints a
//! one-line map and checks that adverse points stay near majority
//! critical points.

use stereogap::critical_points::{estimate_constants, RegionBox};
use stereogap::experiment::majority_critical_points;
use stereogap::flow::{adverse_cover_check, classify_zone, Zone};
use stereogap::loss_models::make_toy;

fn main() -> stereogap::Result<()> {
    let model = make_toy(0.01, 0.1)?;
    let region = RegionBox::new(vec![-1.0], vec![1.0])?;

    let map: String = region
        .grid(81)?
        .iter()
        .map(|p| match classify_zone(&model, p).minority {
            Zone::Adverse => '!',
            Zone::Training => '.',
        })
        .collect();
    println!("minority zone over [-1, 1] ('!' = adverse):");
    println!("{map}");

    let constants = estimate_constants(&model, &region, 401, None)?;
    let crit = majority_critical_points(&model, &region, 0)?;
    let cover = adverse_cover_check(&model, &region, &constants, &crit, 401)?;
    println!(
        "adverse fraction {:.4}; {} adverse inner points, all within {:.4} of a majority critical point: {}",
        cover.adverse_fraction,
        cover.adverse_inner_points,
        cover.radius,
        cover.violations.is_empty()
    );
    Ok(())
}

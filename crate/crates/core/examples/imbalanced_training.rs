//! Trains a one-hidden-layer network on imbalanced Gaussian blobs and
//! reports when the minority accuracy catches up with the majority.

use stereogap::harness::{overcost_trend, BlobSpec, Optimizer, Overcost, TrainConfig};

fn main() -> stereogap::Result<()> {
    let blobs = BlobSpec {
        dim: 10,
        classes: 10,
        reference: 100,
        imbalance: 0.1,
        separation: 5.0,
        std: 1.0,
        means: None,
        covariances: None,
        minority_class: 0,
    };
    let config = TrainConfig::new(
        Optimizer::Sgd {
            lr: 0.02,
            batch: 16,
            seed: 0,
        },
        300,
    )
    .with_kappas(&[0.9])
    .stop_when_crossed();

    let trend = overcost_trend(&blobs, 16, 0.0, &[0.02, 0.1, 0.5], &[0, 1], &config)?;
    println!("imbalance  seed  n0   T_early  T_final  overcost");
    for point in &trend {
        for run in &point.runs {
            let r = &run.reports[0];
            let show = |t: Option<usize>| t.map_or("-".to_string(), |v| v.to_string());
            let oc = match r.overcost {
                Overcost::Value { value } => format!("{value:.2}"),
                Overcost::NotReached => "not reached".into(),
                Overcost::Undefined => "undefined".into(),
            };
            println!(
                "{:<10} {:<5} {:<4} {:<8} {:<8} {}",
                point.imbalance,
                run.seed,
                run.n0,
                show(r.t_early),
                show(r.t_final),
                oc
            );
        }
        println!("  median overcost: {:?}", point.median(0.9));
    }
    Ok(())
}

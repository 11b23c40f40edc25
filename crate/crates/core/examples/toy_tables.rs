//! Step counts for the scalar toy loss: how long gradient descent lingers
//! near the majority minimizer, and how many more steps it needs to reach
//! the representative minimizer to a given relative precision.

use stereogap::timing::{toy_catchup_extra_time, toy_stereotype_time, toy_tables};

fn main() -> stereogap::Result<()> {
    let eta = 0.01;
    let tables = toy_tables(eta, -2.0, &[1e-2, 1e-3, 1e-4], &[1e-1, 1e-2, 1e-3])?;

    println!("delta      t_stereotype  k    exact t   simulated k");
    for row in &tables.stereotype {
        println!(
            "{:<10} {:<13.4} {:<4} {:<9.4} {}",
            row.delta, row.t_stereotype, row.k_stereotype, row.t_exact, row.k_simulated
        );
    }
    println!();
    println!("delta      epsilon  k_catchup  k_bound  simulated k");
    for row in &tables.catchup {
        println!(
            "{:<10} {:<8} {:<10} {:<8} {}",
            row.delta, row.epsilon, row.k_catchup, row.k_bound, row.k_simulated
        );
    }

    let delta = 0.01;
    println!();
    println!("closed forms at delta = {delta}, x_init = -2:");
    println!("  t_stereotype          = {:.6}", toy_stereotype_time(delta, 1.0, -2.0));
    println!("  extra time (eps=1e-3) = {:.6}", toy_catchup_extra_time(delta, 1e-3));
    Ok(())
}

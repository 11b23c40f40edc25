//! Integrates the full gradient flow of the toy loss from x = -2 and
//! measures the stereotype and catch-up times against their lower bounds.

use stereogap::flow::{integrate_flow, lyapunov_minority_check, FlowOptions, Integrator, StoppingRule};
use stereogap::loss_models::{make_toy, Part};
use stereogap::timing::{timing_report, toy_stereotype_time, HitTime, TimingOptions};

fn main() -> stereogap::Result<()> {
    let delta = 0.01;
    let model = make_toy(delta, 1.0)?;
    let step = 1e-3;
    let opts = FlowOptions::euler(step, 40.0)
        .with_integrator(Integrator::Rk4)
        .with_stop(StoppingRule::GradNorm(1e-12));
    let traj = integrate_flow(&model, Part::Total, &[-2.0], &opts)?;
    println!(
        "{} samples up to t = {:.2} ({:?})",
        traj.len(),
        traj.final_time(),
        traj.status
    );

    let report = timing_report(
        &model,
        &traj,
        &[model.representative()],
        &[model.stereotype()],
        &TimingOptions {
            learning_rate: Some(step),
            slack: step,
            ..TimingOptions::default()
        },
    )?;
    if let HitTime::Reached { time } = report.t_stereotype {
        println!(
            "t_stereotype = {time:.5} (closed form {:.5}, lower bound {:.5})",
            toy_stereotype_time(delta, 1.0, -2.0),
            report.stereotype_lower_bound.unwrap_or(f64::NAN)
        );
    }
    for entry in &report.catchup {
        if let HitTime::Reached { time } = entry.time {
            println!(
                "eps = {:<6} t_catchup = {time:.5}   extra-time bound {:.5}   satisfied: {:?}",
                entry.epsilon, entry.lower_bound, entry.bound_satisfied
            );
        }
    }

    let lyap = lyapunov_minority_check(&traj);
    println!(
        "minority loss never increases outside the adverse zone: {} ({} adverse steps)",
        lyap.ok, lyap.adverse_steps
    );
    Ok(())
}

//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line for
//! each. Criteria listed in `EXPECTED_FAILURES` are known to be out of
//! reach; they still print FAIL, and the run exits non-zero on any other
//! failure or if one of them starts passing. Set `ACCEPTANCE_STRICT=1` to
//! make expected failures fatal as well. A substring argument restricts the
//! run to matching criteria, e.g. `cargo test --test acceptance -- c05`.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use stereogap::critical_points::{
    auto_region, estimate_constants, linear_closed_forms, linear_gap_bound, stereotype_gap, RegionBox, SearchOptions,
};
use stereogap::flow::{
    adverse_cover_check, adverse_fraction, curve_distance_bound, integrate_flow, lyapunov_minority_check,
    minority_adverse_ball, FlowOptions, Integrator, LinearFlow, StoppingRule, Trajectory,
};
use stereogap::harness::{
    debias_protocol, median_overcost, overcost_trend, BlobSpec, DebiasOptions, DebiasStatus, Optimizer, Overcost,
    TrainConfig,
};
use stereogap::linalg::distance;
use stereogap::loss_models::{
    finite_diff_oracle, make_double_well, make_quadratic, make_toy, relative_error, FdEstimate, FdOrder,
    GroupedDataset, MlpArchitecture, MlpClassifierLoss, Part, QuadraticSplitLoss, SplitLoss,
};
use stereogap::rng::{self, streams};
use stereogap::spectral::{rho_max, rho_min};
use stereogap::timing::{
    catchup_by_minority_loss, timing_report, toy_catchup_extra_time, toy_stereotype_time, toy_tables, HitTime,
    TimingOptions,
};

use common::{faint_minority_quadratic, generic_quadratic, normal_vec, regression_data};

const SEED: u64 = 20_240_601;

/// Discrete gradient descent from the stereotype needs
/// `ceil(log(1/ε) / -log(1 - η(1+δ)))` steps, which is 681 and 687 at
/// ε = 1e-3 for δ = 1e-2 and 1e-3. The tabulated 684 and 690 are the
/// continuous-time count `log(1/ε)/(η(1+δ))`, three steps away.
const EXPECTED_FAILURES: [&str; 1] = ["c02"];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within_runtime(o: Outcome, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    match limit {
        Some(l) if elapsed > l => Outcome::new(false, format!("{}; runtime {elapsed:.2?} exceeds {l:?}", o.detail)),
        _ => o,
    }
}

// Criterion 1: toy stereotype table in approximation mode.
fn c01_stereotype_table() -> Outcome {
    let expected = [(1e-2, 5.25, 525u64), (1e-3, 7.59, 759), (1e-4, 9.89, 989)];
    let t = toy_tables(1e-2, -2.0, &[1e-2, 1e-3, 1e-4], &[1e-1, 1e-2, 1e-3]).expect("tables");
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    for ((delta, t_ref, k_ref), row) in expected.iter().zip(&t.stereotype) {
        seen.push(format!("({delta}, {:.4}, {})", row.t_stereotype, row.k_stereotype));
        let t_ok = (row.t_stereotype - t_ref).abs() <= 0.01 * t_ref;
        let k_ok = row.k_stereotype.abs_diff(*k_ref) <= 2;
        if !(t_ok && k_ok && row.delta == *delta) {
            bad.push(format!("δ={delta}"));
        }
    }
    Outcome::new(bad.is_empty(), format!("rows {}; mismatches {bad:?}", seen.join(" ")))
}

// Criterion 2: debias table via the formula and via simulated discrete GD.
fn c02_debias_table() -> Outcome {
    let expected = [
        (1e-2, 1e-1, 228u64),
        (1e-2, 1e-2, 456),
        (1e-2, 1e-3, 684),
        (1e-3, 1e-1, 230),
        (1e-3, 1e-2, 460),
        (1e-3, 1e-3, 690),
    ];
    let t = toy_tables(1e-2, -2.0, &[1e-2, 1e-3], &[1e-1, 1e-2, 1e-3]).expect("tables");
    let mut formula_bad = Vec::new();
    let mut gd_bad = Vec::new();
    for (delta, eps, k_ref) in expected {
        let row = t
            .catchup
            .iter()
            .find(|r| r.delta == delta && r.epsilon == eps)
            .expect("grid cell");
        if row.k_catchup.abs_diff(k_ref) > 2 {
            formula_bad.push(format!("δ={delta} ε={eps}: {} vs {k_ref}", row.k_catchup));
        }
        if row.k_simulated.abs_diff(k_ref) > 2 {
            gd_bad.push(format!("δ={delta} ε={eps}: {} vs {k_ref}", row.k_simulated));
        }
    }
    Outcome::new(
        formula_bad.is_empty() && gd_bad.is_empty(),
        format!("formula mismatches {formula_bad:?}; simulated GD mismatches {gd_bad:?}"),
    )
}

// Criterion 3: certified gap on random quadratic instances.
fn c03_certified_gap() -> Outcome {
    let target = 200;
    let mut certified = 0;
    let mut rejected = 0;
    let mut violations = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    let opts = SearchOptions::default();
    let mut index = 0u64;
    while certified < target && index < 20 * target as u64 {
        let model = faint_minority_quadratic(SEED, index, 8);
        index += 1;
        let anchor = model.minimizer(Part::Majority).expect("majority minimizer");
        let region = RegionBox::around(&anchor, 1.0).expect("box");
        let constants = match estimate_constants(&model, &region, 3, None) {
            Ok(c) => c,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let report = stereotype_gap(&model, &region, &constants, &opts).expect("gap");
        if !report.certified {
            rejected += 1;
            continue;
        }
        certified += 1;
        let pair_ok = report.pairs.iter().all(|p| p.distance <= report.bound && p.index_match);
        let h_ok = report.hausdorff.is_some_and(|h| h <= report.bound);
        let complete = report.unpaired_representative.is_empty() && report.unpaired_stereotypical.is_empty();
        if let Some(h) = report.hausdorff {
            worst_ratio = worst_ratio.max(h / report.bound);
        }
        if !(pair_ok && h_ok && complete && !report.ambiguous) {
            violations.push(index - 1);
        }
    }
    Outcome::new(
        certified == target && violations.is_empty(),
        format!(
            "{certified} certified instances ({rejected} rejected as uncertified); violations {violations:?}; \
             max hausdorff/bound {worst_ratio:.3}"
        ),
    )
}

// Criterion 4: closed-form gap bound for least squares.
fn c04_linear_gap_bound() -> Outcome {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let model = generic_quadratic(SEED ^ 4, i, 6, 0.0);
        let g = linear_gap_bound(&model).expect("bound");
        worst = worst.max(g.actual_gap / g.bound);
        if !g.holds {
            violations += 1;
        }
    }
    Outcome::new(
        violations == 0,
        format!("1000 instances, {violations} violations, max gap/bound {worst:.3}"),
    )
}

// Criterion 5: distance between the majority and full flow curves.
fn c05_curve_distance() -> Outcome {
    let mut pointwise = 0;
    let mut sup = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let gamma = if i % 2 == 0 { 0.0 } else { 0.05 };
        let model = generic_quadratic(SEED ^ 5, i, 5, gamma);
        let mut r = rng::stream(SEED ^ 5, streams::INIT + i);
        let init: Vec<f64> = normal_vec(&mut r, model.dim()).into_iter().map(|v| 3.0 * v).collect();
        let rep = curve_distance_bound(&model, &init, 10_000).expect("curve distance");
        worst = worst.max(rep.empirical_sup / rep.sup_bound);
        if !rep.pointwise_holds {
            pointwise += 1;
        }
        if !rep.holds {
            sup += 1;
        }
    }
    Outcome::new(
        pointwise == 0 && sup == 0,
        format!("100 instances; pointwise violations {pointwise}, sup violations {sup}; max sup/bound {worst:.3}"),
    )
}

// Criterion 6: adverse-zone cover and the monotone adverse fraction.
fn c06_adverse_cover() -> Outcome {
    let opts = SearchOptions::default();
    let mut details = Vec::new();
    let mut ok = true;
    let mut check = |name: String, model: &dyn SplitLoss, region: &RegionBox, grid: usize| {
        let constants = estimate_constants(model, region, grid, None).expect("constants");
        let report = stereotype_gap(model, region, &constants, &opts).expect("gap");
        if !report.certified {
            ok = false;
            details.push(format!("{name}: not certified"));
            return;
        }
        let crit: Vec<Vec<f64>> = report
            .pairs
            .iter()
            .map(|p| p.stereotypical.location.clone())
            .chain(report.unpaired_stereotypical.iter().map(|p| p.location.clone()))
            .collect();
        let cover = adverse_cover_check(model, region, &report.constants, &crit, grid).expect("cover");
        ok &= cover.violations.is_empty();
        details.push(format!(
            "{name}: {} adverse of {} inner points, {} uncovered",
            cover.adverse_inner_points,
            cover.inner_points,
            cover.violations.len()
        ));
    };
    let k1 = RegionBox::new(vec![-1.0], vec![1.0]).expect("box");
    for delta in [1e-1, 1e-2, 1e-3] {
        let toy = make_toy(delta, 0.1).expect("toy");
        check(format!("toy δ={delta}"), &toy, &k1, 2001);
    }
    let well = make_double_well(1e-3, 0.5).expect("double well");
    check(
        "double well".into(),
        &well,
        &RegionBox::new(vec![-1.6], vec![1.6]).expect("box"),
        3201,
    );
    let mut two_d = 0;
    let mut index = 0;
    while two_d < 3 && index < 200 {
        let model = faint_minority_quadratic(SEED ^ 6, index, 2);
        index += 1;
        if model.dim() != 2 {
            continue;
        }
        let anchor = model.minimizer(Part::Majority).expect("minimizer");
        let Ok(a) = auto_region(&model, &anchor, 0.25, 4, 61, &opts) else {
            continue;
        };
        check(format!("2-D quadratic #{}", index - 1), &model, &a.region, 201);
        two_d += 1;
    }
    if two_d < 3 {
        ok = false;
        details.push(format!("only {two_d} certified 2-D instances"));
    }

    let fractions: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&d| adverse_fraction(&make_toy(d, 0.1).expect("toy"), &k1, 200_001).expect("fraction"))
        .collect();
    let decreasing = fractions.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        ok && decreasing,
        format!(
            "{}; toy adverse fractions {fractions:?} (strictly decreasing: {decreasing})",
            details.join("; ")
        ),
    )
}

fn suite_trajectories() -> Vec<(String, Trajectory)> {
    let mut out = Vec::new();
    for delta in [1e-1, 1e-2, 1e-3] {
        let toy = make_toy(delta, 1.0).expect("toy");
        for (method, integ) in [("euler", Integrator::Euler), ("rk4", Integrator::Rk4)] {
            for x0 in [-2.0, 0.5, 3.0] {
                let opts = FlowOptions::euler(1e-2, 30.0)
                    .with_integrator(integ)
                    .with_stop(StoppingRule::GradNorm(1e-12));
                let t = integrate_flow(&toy, Part::Total, &[x0], &opts).expect("toy flow");
                out.push((format!("toy δ={delta} {method} x0={x0}"), t));
            }
        }
    }
    let well = make_double_well(1e-2, 0.5).expect("double well");
    for x0 in [-1.5, -0.2, 0.3, 1.4] {
        let opts = FlowOptions::euler(1e-2, 40.0).with_stop(StoppingRule::GradNorm(1e-12));
        out.push((
            format!("double well x0={x0}"),
            integrate_flow(&well, Part::Total, &[x0], &opts).expect("well flow"),
        ));
    }
    for i in 0..10 {
        let model = generic_quadratic(SEED ^ 7, i, 4, 0.01);
        let mut r = rng::stream(SEED ^ 7, streams::INIT + i);
        let init = normal_vec(&mut r, model.dim());
        let h = 0.5 / rho_max(&model.hessian_matrix(Part::Total)).expect("spectrum");
        let opts = FlowOptions::euler(h, 4000.0 * h).with_stop(StoppingRule::GradNorm(1e-12));
        out.push((
            format!("quadratic #{i}"),
            integrate_flow(&model, Part::Total, &init, &opts).expect("quadratic flow"),
        ));
    }
    out
}

// Criterion 7: the minority loss never increases on majority-adverse steps.
fn c07_lyapunov() -> Outcome {
    let trajs = suite_trajectories();
    let mut bad = Vec::new();
    let mut adverse = 0;
    for (name, t) in &trajs {
        let r = lyapunov_minority_check(t);
        adverse += r.adverse_steps;
        if !r.ok {
            bad.push(format!("{name} ({} violations)", r.violations));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{} trajectories, {adverse} adverse steps; failing {bad:?}", trajs.len()),
    )
}

fn dense_times(horizon: f64, h: f64) -> Vec<f64> {
    let n = (horizon / h).ceil() as usize;
    (0..=n).map(|i| i as f64 * h).collect()
}

// Criterion 8: lower bounds are sound, and tight on the toy family.
fn c08_timing_bounds() -> Outcome {
    let eps = vec![1e-1, 1e-2, 1e-3];
    let mut sound_bad = Vec::new();
    let mut tight_worst: f64 = 0.0;
    let mut checked = 0;
    let h = 1e-3;
    for delta in [1e-1, 1e-2, 1e-3] {
        let toy = make_toy(delta, 1.0).expect("toy");
        let x0 = -2.0;
        let horizon = toy_stereotype_time(delta, 1.0, x0) + toy_catchup_extra_time(delta, 1e-3) + 1.0;
        let times = dense_times(horizon, h);
        let tr = Trajectory::from_fn(&toy, Part::Total, &times, |t| vec![toy.exact_flow(Part::Total, x0, t)])
            .expect("trajectory");
        let rep = timing_report(
            &toy,
            &tr,
            &[toy.representative()],
            &[toy.stereotype()],
            &TimingOptions {
                epsilons: eps.clone(),
                ..TimingOptions::default()
            },
        )
        .expect("timing");
        checked += 1;
        let t_st = match rep.t_stereotype {
            HitTime::Reached { time } => time,
            HitTime::NotReached => f64::NAN,
        };
        let closed = toy_stereotype_time(delta, 1.0, x0);
        tight_worst = tight_worst.max(((t_st - closed) / closed).abs());
        for (e, entry) in eps.iter().zip(&rep.catchup) {
            let t = match entry.time {
                HitTime::Reached { time } => time,
                HitTime::NotReached => f64::NAN,
            };
            let closed_c = closed + toy_catchup_extra_time(delta, *e);
            tight_worst = tight_worst.max(((t - closed_c) / closed_c).abs());
        }
        let lb = rep.stereotype_lower_bound.unwrap_or(f64::NAN);
        tight_worst = tight_worst.max(((lb - closed) / closed).abs());
    }

    let opts = SearchOptions::default();
    let mut certified = 0;
    let mut index = 0;
    while certified < 20 && index < 400 {
        let model = faint_minority_quadratic(SEED ^ 8, index, 4);
        index += 1;
        let anchor = model.minimizer(Part::Majority).expect("minimizer");
        let region = RegionBox::around(&anchor, 1.0).expect("box");
        let Ok(constants) = estimate_constants(&model, &region, 3, None) else {
            continue;
        };
        let report = stereotype_gap(&model, &region, &constants, &opts).expect("gap");
        if !report.certified {
            continue;
        }
        certified += 1;
        let theta_hat = model.minimizer(Part::Total).expect("minimizer");
        let t0 = 2.0 / rho_min(&model.hessian_matrix(Part::Total)).expect("spectrum");
        let init: Vec<f64> = {
            let hess = model.hessian_matrix(Part::Total);
            let eig = stereogap::spectral::eigen_decompose(&hess).expect("eigen");
            let dev: Vec<f64> = anchor.iter().zip(&theta_hat).map(|(a, b)| a - b).collect();
            let d = dev.len();
            let mut p = theta_hat.clone();
            for k in 0..d {
                let v = eig.vectors.column(k);
                let c: f64 = v.iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() * (t0 * eig.values[k]).exp();
                for i in 0..d {
                    p[i] += c * v[i];
                }
            }
            p
        };
        let flow = LinearFlow::new(&model, Part::Total, &init).expect("flow");
        let horizon = t0 + 12.0 / flow.rate_min();
        let step = horizon / 200_000.0;
        let times = dense_times(horizon, step);
        let tr = Trajectory::from_fn(&model, Part::Total, &times, |t| flow.at(t)).expect("trajectory");
        let rep = timing_report(
            &model,
            &tr,
            &theta_hat,
            &anchor,
            &TimingOptions {
                epsilons: eps.clone(),
                pass_tol: 1e-9 * (1.0 + distance(&anchor, &theta_hat)),
                slack: step,
                seed: index,
                ..TimingOptions::default()
            },
        )
        .expect("timing");
        checked += 1;
        let ok = rep.stereotype_bound_satisfied != Some(false)
            && rep.catchup.iter().all(|c| c.bound_satisfied != Some(false));
        if !ok {
            sound_bad.push(index - 1);
        }
    }
    let tight = tight_worst <= 1e-6;
    Outcome::new(
        sound_bad.is_empty() && tight && certified == 20,
        format!(
            "{checked} instances ({certified} certified quadratics); bound violations {sound_bad:?}; \
             toy worst relative error vs closed forms {tight_worst:.2e}"
        ),
    )
}

// Criterion 9: minority-loss catch-up time grows with precision.
fn c09_minority_catchup() -> Outcome {
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut details = Vec::new();
    let mut ok = true;
    for delta in [1e-1, 1e-2] {
        let toy = make_toy(delta, 1.0).expect("toy");
        let horizon = 20.0 / (1.0 + delta);
        let times = dense_times(horizon, 1e-3);
        let st = toy.stereotype();
        let tr = Trajectory::from_fn(&toy, Part::Total, &times, |t| vec![toy.exact_flow(Part::Total, st, t)])
            .expect("trajectory");
        let out = catchup_by_minority_loss(&toy, &tr, &[toy.representative()], &[st], &eps).expect("catchup");
        let inc_ok = out.increments.iter().all(|&d| d > 0.0);
        ok &= out.strictly_increasing && inc_ok;
        details.push(format!(
            "toy δ={delta}: {} increments positive {inc_ok}",
            out.increments.len()
        ));
    }
    let mut done = 0;
    let mut index = 0;
    while done < 3 && index < 300 {
        let model = generic_quadratic(SEED ^ 9, index, 2, 0.01);
        index += 1;
        if model.dim() != 2 {
            continue;
        }
        let hat = model.minimizer(Part::Total).expect("minimizer");
        let hat1 = model.minimizer(Part::Majority).expect("minimizer");
        if model.value(Part::Minority, &hat1) <= model.value(Part::Minority, &hat) {
            continue;
        }
        let flow = LinearFlow::new(&model, Part::Total, &hat1).expect("flow");
        let horizon = 40.0 / flow.rate_min();
        let times = dense_times(horizon, horizon / 200_000.0);
        let tr = Trajectory::from_fn(&model, Part::Total, &times, |t| flow.at(t)).expect("trajectory");
        let out = catchup_by_minority_loss(&model, &tr, &hat, &hat1, &eps).expect("catchup");
        let inc_ok = out.increments.iter().all(|&d| d > 0.0);
        ok &= out.strictly_increasing && inc_ok && out.increments.len() == eps.len() - 1;
        details.push(format!(
            "2-D quadratic #{}: increments {:?}",
            index - 1,
            out.increments.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
        ));
        done += 1;
    }
    ok &= done == 3;
    Outcome::new(ok, details.join("; "))
}

// Criterion 10: sampled points of the minority-adverse ball.
fn c10_adverse_ball() -> Outcome {
    let mut instances = 0;
    let mut skipped = 0;
    let mut violations = 0;
    let mut index = 0;
    while instances < 100 && index < 1000 {
        let model = generic_quadratic(SEED ^ 10, index, 5, if index % 3 == 0 { 0.02 } else { 0.0 });
        index += 1;
        match minority_adverse_ball(&model, 200, index) {
            Ok(ball) => {
                instances += 1;
                violations += ball.violations;
                if !(ball.verified && ball.depth_ok && ball.samples == 200) {
                    violations += usize::from(ball.violations == 0);
                }
            }
            Err(_) => skipped += 1,
        }
    }
    Outcome::new(
        instances == 100 && violations == 0,
        format!(
            "{instances} instances × 200 samples, {violations} violations ({skipped} degenerate instances skipped)"
        ),
    )
}

fn mlp_model(seed: u64) -> MlpClassifierLoss {
    let mut r = rng::stream(seed, streams::DATASET);
    let n = 30;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut r, 3)).collect();
    let targets: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    let group: Vec<u8> = (0..n).map(|i| u8::from(i % 3 != 0 || i > 6)).collect();
    let ds = GroupedDataset::new(stereogap::Matrix::from_rows(&rows).expect("rows"), targets, group).expect("data");
    MlpClassifierLoss::new(
        MlpArchitecture {
            input: 3,
            hidden: 5,
            classes: 3,
        },
        ds,
        0.01,
    )
    .expect("mlp")
}

// Criterion 11: closed-form gradients against central differences.
fn c11_gradient_oracle() -> Outcome {
    let toy = make_toy(0.05, 0.7).expect("toy");
    let well = make_double_well(0.05, 0.5).expect("double well");
    let quad = {
        let mut r = rng::stream(SEED, streams::DATASET);
        let data = regression_data(&mut r, 4, 25, 6, 0.8);
        make_quadratic(data, 0.03, vec![0.5; 4]).expect("quadratic")
    };
    let mlp = mlp_model(SEED);
    let families: [(&str, &dyn SplitLoss, f64); 4] = [
        ("toy", &toy, 2.0),
        ("double well", &well, 1.5),
        ("quadratic", &quad, 2.0),
        ("mlp", &mlp, 1.0),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, model, scale) in families {
        let mut r = rng::stream(SEED, streams::PROBES);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let theta: Vec<f64> = (0..model.dim()).map(|_| r.random_range(-scale..scale)).collect();
            for part in [Part::Majority, Part::Minority, Part::Total] {
                let exact = model.gradient(part, &theta);
                let FdEstimate::Gradient(fd) =
                    finite_diff_oracle(model, part, &theta, FdOrder::Gradient, 1e-5).expect("fd")
                else {
                    unreachable!()
                };
                let err = relative_error(&exact, &fd);
                if stereogap::linalg::norm(&exact) > 1e-8 {
                    worst = worst.max(err);
                }
            }
        }
        ok &= worst <= 1e-5;
        details.push(format!("{name} {worst:.1e}"));
    }
    Outcome::new(ok, format!("worst relative errors: {}", details.join(", ")))
}

// Criterion 12: overcost trend on imbalanced blobs.
fn c12_overcost_trend() -> Outcome {
    let blobs = BlobSpec {
        dim: 10,
        classes: 10,
        reference: 200,
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
        1000,
    )
    .with_kappas(&[0.9])
    .stop_when_crossed();
    let zetas = [0.01, 0.1, 0.3];
    let trend = overcost_trend(&blobs, 16, 0.0, &zetas, &[0, 1, 2], &config).expect("trend");
    let medians: Vec<Overcost> = trend
        .iter()
        .map(|p| {
            let per_run: Vec<Overcost> = p.runs.iter().map(|r| r.reports[0].overcost).collect();
            median_overcost(&per_run)
        })
        .collect();
    let values: Vec<Option<f64>> = medians
        .iter()
        .map(|m| match m {
            Overcost::Value { value } => Some(*value),
            _ => None,
        })
        .collect();
    let all = values.iter().all(Option::is_some);
    let v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
    let decreasing = all && v.windows(2).all(|w| w[1] < w[0]);
    let positive = v[0] > 0.0;
    Outcome::new(
        decreasing && positive,
        format!(
            "median overcost at ζ = {zetas:?}: {v:?} (strictly decreasing {decreasing}, positive at 0.01 {positive})"
        ),
    )
}

// Criterion 13: the debias protocol reproduces the closed-form gap.
fn c13_debias_protocol() -> Outcome {
    let opts = SearchOptions::default();
    let mut done = 0;
    let mut worst_err: f64 = 0.0;
    let mut bad = Vec::new();
    let mut index = 0;
    while done < 10 && index < 400 {
        let model: QuadraticSplitLoss = faint_minority_quadratic(SEED ^ 13, index, 3);
        index += 1;
        let forms = linear_closed_forms(&model).expect("closed forms");
        let Ok(a) = auto_region(&model, &forms.theta_hat1, 0.25, 4, 11, &opts) else {
            continue;
        };
        let mut r = rng::stream(SEED ^ 13, streams::INIT + index);
        let init: Vec<f64> = forms
            .theta_hat1
            .iter()
            .map(|v| v + 2.0 * (r.next_u32() as f64 / u32::MAX as f64 - 0.5))
            .collect();
        let rep = debias_protocol(
            &model,
            &init,
            &DebiasOptions {
                step: 0.5 / rho_max(&model.hessian_matrix(Part::Total)).expect("spectrum"),
                tol: 1e-12,
                max_steps: 5_000_000,
            },
            Some(&a.report.constants),
        )
        .expect("debias");
        done += 1;
        let closed = distance(&forms.theta_hat, &forms.theta_hat1);
        let err = (rep.distance - closed).abs();
        worst_err = worst_err.max(err);
        if rep.status != DebiasStatus::Converged || err > 1e-8 || rep.within_gap_bound != Some(true) {
            bad.push(index - 1);
        }
    }
    Outcome::new(
        bad.is_empty() && done == 10,
        format!("{done} certified instances; worst |distance − closed form| {worst_err:.2e}; failing {bad:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 13] = [
        (
            "c01 toy stereotype table",
            c01_stereotype_table,
            Some(Duration::from_secs(1)),
        ),
        ("c02 toy debias table", c02_debias_table, Some(Duration::from_secs(1))),
        (
            "c03 certified stereotype gap",
            c03_certified_gap,
            Some(Duration::from_secs(30)),
        ),
        (
            "c04 linear gap bound",
            c04_linear_gap_bound,
            Some(Duration::from_secs(10)),
        ),
        ("c05 flow curve distance", c05_curve_distance, None),
        ("c06 adverse zone cover", c06_adverse_cover, None),
        ("c07 minority Lyapunov", c07_lyapunov, None),
        ("c08 timing bounds", c08_timing_bounds, None),
        ("c09 minority catch-up divergence", c09_minority_catchup, None),
        ("c10 minority-adverse ball", c10_adverse_ball, None),
        ("c11 gradient oracle", c11_gradient_oracle, None),
        ("c12 overcost trend", c12_overcost_trend, Some(Duration::from_secs(300))),
        ("c13 debias protocol", c13_debias_protocol, None),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut passed, mut failed, mut expected_failed, mut unexpected_passed) = (0, 0, 0, 0);
    for (name, f, limit) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = within_runtime(outcome, elapsed, limit);
        let expected = EXPECTED_FAILURES.iter().any(|id| name.starts_with(id));
        let tag = match (outcome.pass, expected) {
            (true, false) => {
                passed += 1;
                "PASS"
            }
            (true, true) => {
                unexpected_passed += 1;
                "PASS (unexpected; remove it from EXPECTED_FAILURES)"
            }
            (false, true) => {
                expected_failed += 1;
                "FAIL (expected)"
            }
            (false, false) => {
                failed += 1;
                "FAIL"
            }
        };
        println!("{tag} {name} [{elapsed:.2?}] {}", outcome.detail);
    }
    println!(
        "acceptance: {passed} passed, {failed} failed, {expected_failed} expected failure(s), \
         {unexpected_passed} unexpected pass(es)"
    );
    if failed > 0 || unexpected_passed > 0 || (strict && expected_failed > 0) {
        std::process::exit(1);
    }
}

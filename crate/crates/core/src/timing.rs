//! Stereotype and catch-up times measured on flow trajectories, their
//! Hessian-based lower bounds, and the closed forms of the scalar toy loss.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::Trajectory;
use crate::linalg::{distance, dot, norm, sub};
use crate::loss_models::{Part, SplitLoss};
use crate::rng::{self, streams};
use crate::spectral::rho_max;

/// First hitting time of a criterion along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HitTime {
    Reached { time: f64 },
    NotReached,
}

impl HitTime {
    pub fn time(self) -> Option<f64> {
        match self {
            HitTime::Reached { time } => Some(time),
            HitTime::NotReached => None,
        }
    }

    pub fn is_reached(self) -> bool {
        matches!(self, HitTime::Reached { .. })
    }
}

/// Smallest `s ∈ [0, 1]` with `‖a + s (b − a) − q‖ ≤ tol`.
fn segment_entry(a: &[f64], b: &[f64], q: &[f64], tol: f64) -> Option<f64> {
    let u = sub(a, q);
    let d = sub(b, a);
    let uu = dot(&u, &u);
    if uu.sqrt() <= tol {
        return Some(0.0);
    }
    let dd = dot(&d, &d);
    if dd == 0.0 {
        return None;
    }
    let ud = dot(&u, &d);
    let s_close = (-ud / dd).clamp(0.0, 1.0);
    let closest: f64 = u
        .iter()
        .zip(&d)
        .map(|(x, y)| (x + s_close * y).powi(2))
        .sum::<f64>()
        .sqrt();
    let slack = 1e-12 * (uu.sqrt() + dd.sqrt());
    if closest > tol + slack {
        return None;
    }
    let disc = (ud * ud - dd * (uu - tol * tol)).max(0.0);
    let s = (-ud - disc.sqrt()) / dd;
    Some(s.clamp(0.0, s_close))
}

/// First time the trajectory enters the closed ball `B(target, radius)`,
/// interpolating linearly in parameter space between stored points.
fn ball_entry(traj: &Trajectory, target: &[f64], radius: f64) -> (HitTime, Option<Vec<f64>>) {
    let pts = &traj.points;
    if pts.is_empty() {
        return (HitTime::NotReached, None);
    }
    if distance(&pts[0], target) <= radius {
        return (HitTime::Reached { time: traj.times[0] }, Some(pts[0].clone()));
    }
    for i in 1..pts.len() {
        if let Some(s) = segment_entry(&pts[i - 1], &pts[i], target, radius) {
            let t = traj.times[i - 1] + s * (traj.times[i] - traj.times[i - 1]);
            let p = pts[i - 1].iter().zip(&pts[i]).map(|(a, b)| a + s * (b - a)).collect();
            return (HitTime::Reached { time: t }, Some(p));
        }
    }
    (HitTime::NotReached, None)
}

/// First time a scalar series drops to `level`, linearly interpolated.
fn level_crossing(times: &[f64], values: &[f64], level: f64) -> HitTime {
    match values.iter().position(|&v| v <= level) {
        None => HitTime::NotReached,
        Some(0) => HitTime::Reached { time: times[0] },
        Some(i) => {
            let (v0, v1) = (values[i - 1], values[i]);
            let s = ((v0 - level) / (v0 - v1)).clamp(0.0, 1.0);
            HitTime::Reached {
                time: times[i - 1] + s * (times[i] - times[i - 1]),
            }
        }
    }
}

fn check_tol(pass_tol: f64) -> Result<()> {
    if !(pass_tol.is_finite() && pass_tol >= 0.0) {
        return Err(invalid(
            "pass_tol",
            format!("must be finite and nonnegative, got {pass_tol}"),
        ));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

fn distinct_pair(theta_hat: &[f64], theta_st: &[f64]) -> Result<f64> {
    let gap = distance(theta_hat, theta_st);
    if gap == 0.0 {
        return Err(Error::Degenerate("representative and stereotype coincide".into()));
    }
    Ok(gap)
}

/// First time the trajectory comes within `pass_tol` of `theta_st`.
pub fn measure_stereotype_time(traj: &Trajectory, theta_st: &[f64], pass_tol: f64) -> Result<HitTime> {
    check_tol(pass_tol)?;
    Ok(ball_entry(traj, theta_st, pass_tol).0)
}

/// Stereotype arrival time together with the interpolated point reached.
pub fn stereotype_arrival(traj: &Trajectory, theta_st: &[f64], pass_tol: f64) -> Result<(HitTime, Option<Vec<f64>>)> {
    check_tol(pass_tol)?;
    Ok(ball_entry(traj, theta_st, pass_tol))
}

/// First time `‖θ(t) − θ̂‖ / ‖θ̂_st − θ̂‖ ≤ ε`.
pub fn measure_catchup_time(traj: &Trajectory, theta_hat: &[f64], theta_st: &[f64], eps: f64) -> Result<HitTime> {
    check_epsilon(eps)?;
    let gap = distinct_pair(theta_hat, theta_st)?;
    Ok(ball_entry(traj, theta_hat, eps * gap).0)
}

/// `((1/M) log(‖θ_init − θ̂‖ / ‖θ̂_st − θ̂‖), (1/M) log(1/ε))`, lower bounds on
/// the stereotype time and on the extra time to relative precision `ε`.
pub fn duration_lower_bounds(
    m: f64,
    theta_init: &[f64],
    theta_hat: &[f64],
    theta_st: &[f64],
    eps: f64,
) -> Result<(f64, f64)> {
    if !(m.is_finite() && m > 0.0) {
        return Err(invalid("m", format!("must be positive, got {m}")));
    }
    check_epsilon(eps)?;
    let gap = distinct_pair(theta_hat, theta_st)?;
    let start = distance(theta_init, theta_hat);
    Ok(((start / gap).ln() / m, (1.0 / eps).ln() / m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianBound {
    pub m: f64,
    /// Exact for models with constant Hessian, sampled otherwise.
    pub certified: bool,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Supremum of `ρ_max(∇²L)` over a ball containing `points`. The ball is
/// centered at the midpoint of their bounding box.
pub fn hessian_bound<L: SplitLoss + ?Sized>(
    model: &L,
    points: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<HessianBound> {
    let first = points.first().ok_or_else(|| invalid("points", "must be nonempty"))?;
    let d = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let radius = points.iter().map(|p| distance(p, &center)).fold(0.0, f64::max);
    if model.constant_hessian() {
        let m = rho_max(&model.hessian(Part::Total, &center))?;
        return Ok(HessianBound {
            m,
            certified: true,
            center,
            radius,
        });
    }
    let mut rng = rng::stream(seed, streams::SAMPLES);
    let mut m = f64::NEG_INFINITY;
    for p in points {
        m = m.max(rho_max(&model.hessian(Part::Total, p))?);
    }
    for _ in 0..samples {
        let p = rng::uniform_in_ball(&mut rng, &center, radius);
        m = m.max(rho_max(&model.hessian(Part::Total, &p))?);
    }
    Ok(HessianBound {
        m,
        certified: false,
        center,
        radius,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatchupEntry {
    pub epsilon: f64,
    pub time: HitTime,
    /// Lower bound on the time spent after the stereotype.
    pub lower_bound: f64,
    pub k_catchup: Option<u64>,
    pub bound_satisfied: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub t_stereotype: HitTime,
    pub stereotype_point: Option<Vec<f64>>,
    pub stereotype_lower_bound: Option<f64>,
    pub stereotype_bound_satisfied: Option<bool>,
    pub catchup: Vec<CatchupEntry>,
    pub m: f64,
    pub m_certified: bool,
    pub learning_rate: Option<f64>,
    pub k_stereotype: Option<u64>,
    /// `t_catchup,ε` strictly increases along the decreasing ε list.
    pub catchup_monotone: bool,
    /// Slack used in the bound comparisons.
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct TimingOptions {
    pub pass_tol: f64,
    /// Decreasing list of relative precisions.
    pub epsilons: Vec<f64>,
    pub learning_rate: Option<f64>,
    pub m_samples: usize,
    pub seed: u64,
    /// Absolute slack for the bound comparisons.
    pub slack: f64,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self {
            pass_tol: 0.0,
            epsilons: vec![1e-1, 1e-2, 1e-3],
            learning_rate: None,
            m_samples: 256,
            seed: 0,
            slack: 1e-9,
        }
    }
}

fn steps_for(t: f64, eta: Option<f64>) -> Option<u64> {
    eta.map(|h| (t / h).round() as u64)
}

/// Measures the stereotype and catch-up times on a full-loss trajectory
/// and compares them with their lower bounds. The stereotype point used in
/// the bounds is the interpolated point at the arrival time.
pub fn timing_report<L: SplitLoss + ?Sized>(
    model: &L,
    traj: &Trajectory,
    theta_hat: &[f64],
    theta_st: &[f64],
    opts: &TimingOptions,
) -> Result<TimingReport> {
    if traj.field != Part::Total {
        return Err(invalid("trajectory", "must follow the full-loss flow"));
    }
    distinct_pair(theta_hat, theta_st)?;
    if opts.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilons", "must be strictly decreasing"));
    }
    for &e in &opts.epsilons {
        check_epsilon(e)?;
    }
    let mut pts = traj.points.clone();
    pts.push(theta_hat.to_vec());
    let hb = hessian_bound(model, &pts, opts.m_samples, opts.seed)?;
    let (t_st, reached) = stereotype_arrival(traj, theta_st, opts.pass_tol)?;
    let init = &traj.points[0];
    let (st_lb, st_ok, st_time, anchor) = match (t_st, &reached) {
        (HitTime::Reached { time }, Some(p)) if distance(p, theta_hat) > 0.0 => {
            let (lb, _) = duration_lower_bounds(hb.m, init, theta_hat, p, 1.0)?;
            (Some(lb), Some(time >= lb - opts.slack), Some(time), p.clone())
        }
        _ => (None, None, None, theta_st.to_vec()),
    };
    let gap = distance(&anchor, theta_hat);
    let mut catchup = Vec::with_capacity(opts.epsilons.len());
    for &eps in &opts.epsilons {
        let time = ball_entry(traj, theta_hat, eps * gap).0;
        let lower_bound = (1.0 / eps).ln() / hb.m;
        let bound_satisfied = match (time.time(), st_time) {
            (Some(t), Some(s)) => Some(t - s >= lower_bound - opts.slack),
            _ => None,
        };
        catchup.push(CatchupEntry {
            epsilon: eps,
            time,
            lower_bound,
            k_catchup: match (time.time(), st_time) {
                (Some(t), Some(s)) => steps_for(t - s, opts.learning_rate),
                _ => None,
            },
            bound_satisfied,
        });
    }
    let times: Vec<Option<f64>> = catchup.iter().map(|c| c.time.time()).collect();
    let catchup_monotone = times.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true,
        _ => false,
    });
    Ok(TimingReport {
        t_stereotype: t_st,
        stereotype_point: reached,
        stereotype_lower_bound: st_lb,
        stereotype_bound_satisfied: st_ok,
        catchup,
        m: hb.m,
        m_certified: hb.certified,
        learning_rate: opts.learning_rate,
        k_stereotype: st_time.and_then(|t| steps_for(t, opts.learning_rate)),
        catchup_monotone,
        slack: opts.slack,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorityCatchup {
    /// `(ε, t′(ε))` in the order given.
    pub times: Vec<(f64, HitTime)>,
    /// Every ε reached and each successive time strictly larger.
    pub strictly_increasing: bool,
    pub increments: Vec<f64>,
}

/// First times `t′` at which `(L0(θ(t′)) − L0(θ̂)) / (L0(θ̂1) − L0(θ̂)) ≤ ε`
/// along a full-loss trajectory started at the stereotype `θ̂1`.
pub fn catchup_by_minority_loss<L: SplitLoss + ?Sized>(
    model: &L,
    traj: &Trajectory,
    theta_hat: &[f64],
    theta_hat1: &[f64],
    eps_list: &[f64],
) -> Result<MinorityCatchup> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilons", "must be strictly decreasing"));
    }
    for &e in eps_list {
        check_epsilon(e)?;
    }
    let start = &traj.points[0];
    if distance(start, theta_hat1) > 1e-12 * (1.0 + norm(theta_hat1)) {
        return Err(invalid("trajectory", "must start at the stereotype"));
    }
    let base = model.value(Part::Minority, theta_hat);
    let top = model.value(Part::Minority, theta_hat1);
    if !(top > base) {
        return Err(Error::Degenerate(format!(
            "minority loss at the stereotype ({top}) does not exceed its value at the representative ({base})"
        )));
    }
    let ratios: Vec<f64> = traj
        .records
        .iter()
        .map(|r| (r.loss_minority - base) / (top - base))
        .collect();
    let times: Vec<(f64, HitTime)> = eps_list
        .iter()
        .map(|&e| (e, level_crossing(&traj.times, &ratios, e)))
        .collect();
    let reached: Vec<Option<f64>> = times.iter().map(|(_, h)| h.time()).collect();
    let increments: Vec<f64> = reached.windows(2).filter_map(|w| Some(w[1]? - w[0]?)).collect();
    let strictly_increasing = reached.iter().all(Option::is_some) && increments.iter().all(|&d| d > 0.0);
    Ok(MinorityCatchup {
        times,
        strictly_increasing,
        increments,
    })
}

/// Closed-form stereotype time of the toy flow from `x_init < 0`.
pub fn toy_stereotype_time(delta: f64, c: f64, x_init: f64) -> f64 {
    let xh = delta * c / (1.0 + delta);
    ((xh - x_init) / xh).ln() / (1.0 + delta)
}

/// Approximation `log(|m|/δ)/(1+δ)` for `x_init = m c`.
pub fn toy_stereotype_time_approx(delta: f64, multiplier: f64) -> f64 {
    (multiplier.abs() / delta).ln() / (1.0 + delta)
}

/// Closed-form extra time after the stereotype to relative precision `ε`.
pub fn toy_catchup_extra_time(delta: f64, eps: f64) -> f64 {
    (1.0 / eps).ln() / (1.0 + delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StereotypeRow {
    pub delta: f64,
    pub t_stereotype: f64,
    pub k_stereotype: u64,
    pub t_exact: f64,
    /// Gradient-descent steps until the iterate first reaches the stereotype.
    pub k_simulated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatchupRow {
    pub delta: f64,
    pub epsilon: f64,
    pub k_catchup: u64,
    /// `⌈log(1/ε) / −log(1 − η(1+δ))⌉`
    pub k_bound: u64,
    /// Gradient-descent steps from the stereotype to relative precision `ε`.
    pub k_simulated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTables {
    pub learning_rate: f64,
    pub x_init_multiplier: f64,
    pub stereotype: Vec<StereotypeRow>,
    pub catchup: Vec<CatchupRow>,
}

const SIMULATION_CAP: u64 = 100_000_000;

fn simulate_until(mut x: f64, rate: f64, target: f64, done: impl Fn(f64) -> bool) -> Result<u64> {
    let mut k = 0;
    while !done(x) {
        if k >= SIMULATION_CAP {
            return Err(Error::MaxIterations(SIMULATION_CAP as usize));
        }
        x -= rate * (x - target);
        k += 1;
    }
    Ok(k)
}

/// Stereotype and catch-up step tables for the toy loss with `c = 1`.
/// Step counts from the formulas are rounded to the nearest integer.
pub fn toy_tables(eta: f64, x_init_multiplier: f64, deltas: &[f64], epsilons: &[f64]) -> Result<ToyTables> {
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    if !(eta > 0.0 && eta < 2.0 / (1.0 + max_delta)) {
        return Err(invalid(
            "eta",
            format!("must lie in (0, {}) for stability, got {eta}", 2.0 / (1.0 + max_delta)),
        ));
    }
    if !(x_init_multiplier < 0.0 && x_init_multiplier.is_finite()) {
        return Err(invalid("x_init_multiplier", "must be negative"));
    }
    for &d in deltas {
        if !(d.is_finite() && d > 0.0) {
            return Err(invalid("delta_imb", format!("must be positive, got {d}")));
        }
    }
    for &e in epsilons {
        if !(e > 0.0 && e < 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0, 1), got {e}")));
        }
    }
    let mut stereotype = Vec::new();
    let mut catchup = Vec::new();
    for &delta in deltas {
        let t = toy_stereotype_time_approx(delta, x_init_multiplier);
        let xh = delta / (1.0 + delta);
        let rate = eta * (1.0 + delta);
        stereotype.push(StereotypeRow {
            delta,
            t_stereotype: t,
            k_stereotype: (t / eta).round() as u64,
            t_exact: toy_stereotype_time(delta, 1.0, x_init_multiplier),
            k_simulated: simulate_until(x_init_multiplier, rate, xh, |x| x >= 0.0)?,
        });
        for &eps in epsilons {
            catchup.push(CatchupRow {
                delta,
                epsilon: eps,
                k_catchup: (toy_catchup_extra_time(delta, eps) / eta).round() as u64,
                k_bound: ((1.0 / eps).ln() / -(1.0 - rate).abs().ln()).ceil() as u64,
                k_simulated: simulate_until(0.0, rate, xh, |x| (x - xh).abs() <= eps * xh)?,
            });
        }
    }
    Ok(ToyTables {
        learning_rate: eta,
        x_init_multiplier,
        stereotype,
        catchup,
    })
}

impl ToyTables {
    /// Columns `delta, t_stereotype, k_stereotype`.
    pub fn write_stereotype_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "t_stereotype", "k_stereotype"])?;
        for r in &self.stereotype {
            w.write_record([
                r.delta.to_string(),
                format!("{:.6}", r.t_stereotype),
                r.k_stereotype.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `delta, epsilon, k_catchup`.
    pub fn write_catchup_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "epsilon", "k_catchup"])?;
        for r in &self.catchup {
            w.write_record([r.delta.to_string(), r.epsilon.to_string(), r.k_catchup.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Catch-up counts keyed by `(δ, ε)` as strings.
    pub fn catchup_map(&self) -> BTreeMap<String, u64> {
        self.catchup
            .iter()
            .map(|r| (format!("{}:{}", r.delta, r.epsilon), r.k_catchup))
            .collect()
    }
}

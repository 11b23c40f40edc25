//! Gradient flows `θ' = −∇L` (or `−∇L1`), their discretization, and the
//! majority/minority training zones.
//!
//! The flow is discretized by explicit Euler steps `θ_{k+1} = θ_k − s ∇F(θ_k)`
//! with a fixed step `s`; classical RK4 is available for error studies. For
//! grouped least squares the flows are linear and [`LinearFlow`] evaluates
//! them in closed form.
//!
//! A point is majority-adverse when `⟨∇L, ∇L1⟩ ≤ 0` (descending `L` does not
//! descend `L1`) and minority-adverse when `⟨∇L, ∇L0⟩ ≤ 0`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_points::{RegionBox, RegionConstants};
use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, distance, dot, norm, sub};
use crate::loss_models::{Part, QuadraticSplitLoss, SplitLoss};
use crate::rng::{self, streams};
use crate::spectral::{eigen_decompose, rho_extremes, EigenDecomposition};

/// Norm beyond which an integration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Training,
    Adverse,
}

impl Zone {
    fn from_inner(v: f64) -> Self {
        if v <= 0.0 {
            Zone::Adverse
        } else {
            Zone::Training
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Training => "training",
            Zone::Adverse => "adverse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneLabel {
    pub majority: Zone,
    pub minority: Zone,
    /// `⟨∇L, ∇L1⟩`
    pub inner_majority: f64,
    /// `⟨∇L, ∇L0⟩`
    pub inner_minority: f64,
}

fn label_from(g1: &[f64], g0: &[f64]) -> (ZoneLabel, f64) {
    let g: Vec<f64> = g1.iter().zip(g0).map(|(a, b)| a + b).collect();
    let i1 = dot(&g, g1);
    let i0 = dot(&g, g0);
    (
        ZoneLabel {
            majority: Zone::from_inner(i1),
            minority: Zone::from_inner(i0),
            inner_majority: i1,
            inner_minority: i0,
        },
        norm(&g),
    )
}

/// Zone label of `θ` from the signs of the two inner products.
pub fn classify_zone<L: SplitLoss + ?Sized>(model: &L, theta: &[f64]) -> ZoneLabel {
    let (g1, g0) = model.split_gradients(theta);
    label_from(&g1, &g0).0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Predicate on the latest record and point; `true` stops the flow.
pub type StopFn = Arc<dyn Fn(&StepRecord, &[f64]) -> bool + Send + Sync>;

/// When to end an integration before the horizon.
#[derive(Clone, Default)]
pub enum StoppingRule {
    /// Run to the horizon.
    #[default]
    Horizon,
    /// Stop once the integrated field has norm at most `tol`.
    GradNorm(f64),
    /// Stop once the predicate holds for the latest record.
    Custom(StopFn),
}

impl std::fmt::Debug for StoppingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoppingRule::Horizon => write!(f, "Horizon"),
            StoppingRule::GradNorm(t) => write!(f, "GradNorm({t})"),
            StoppingRule::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub step: f64,
    pub horizon: f64,
    pub stop: StoppingRule,
    pub integrator: Integrator,
    /// Keep every `stride`-th step; the final state is always kept.
    pub stride: usize,
}

impl FlowOptions {
    pub fn euler(step: f64, horizon: f64) -> Self {
        Self {
            step,
            horizon,
            stop: StoppingRule::Horizon,
            integrator: Integrator::Euler,
            stride: 1,
        }
    }

    pub fn with_stop(mut self, stop: StoppingRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub loss: f64,
    pub loss_majority: f64,
    pub loss_minority: f64,
    /// `‖∇L‖`, whatever field is integrated.
    pub grad_norm: f64,
    /// Norm of the integrated field.
    pub field_norm: f64,
    pub zone: ZoneLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    HorizonReached,
    Converged,
    StoppedByRule,
    /// Sampled from a closed form rather than integrated.
    Exact,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub field: Part,
    pub step: f64,
    pub integrator: Option<Integrator>,
    pub status: FlowStatus,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub records: Vec<StepRecord>,
}

fn record<L: SplitLoss + ?Sized>(model: &L, field: Part, t: f64, theta: &[f64]) -> (StepRecord, Vec<f64>) {
    let (l1, l0) = model.split_values(theta);
    let (g1, g0) = model.split_gradients(theta);
    let (zone, gn) = label_from(&g1, &g0);
    let f = match field {
        Part::Total => g1.iter().zip(&g0).map(|(a, b)| a + b).collect(),
        Part::Majority => g1,
        Part::Minority => g0,
    };
    (
        StepRecord {
            time: t,
            loss: l1 + l0,
            loss_majority: l1,
            loss_minority: l0,
            grad_norm: gn,
            field_norm: norm(&f),
            zone,
        },
        f,
    )
}

impl Trajectory {
    /// Samples a closed-form path `f(t)` at the given increasing times.
    pub fn from_fn<L: SplitLoss + ?Sized>(
        model: &L,
        field: Part,
        times: &[f64],
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "must be strictly increasing"));
        }
        let points: Vec<Vec<f64>> = times.iter().map(|&t| f(t)).collect();
        if points.iter().any(|p| !all_finite(p)) {
            return Err(Error::NonFinite("closed-form trajectory"));
        }
        let records = times
            .iter()
            .zip(&points)
            .map(|(&t, p)| record(model, field, t, p).0)
            .collect();
        Ok(Self {
            field,
            step: times.get(1).map_or(0.0, |t| t - times[0]),
            integrator: None,
            status: FlowStatus::Exact,
            times: times.to_vec(),
            points,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory has at least the initial point")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial point")
    }

    /// Writes `time, theta_0.., L, L1, L0, grad_norm, zone_maj, zone_min`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.points.first().map_or(0, Vec::len);
        let mut header = vec!["time".to_string()];
        header.extend((0..d).map(|i| format!("theta_{i}")));
        header.extend(["L", "L1", "L0", "grad_norm", "zone_maj", "zone_min"].map(String::from));
        w.write_record(&header)?;
        for (p, r) in self.points.iter().zip(&self.records) {
            let mut row = vec![r.time.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            row.push(r.loss.to_string());
            row.push(r.loss_majority.to_string());
            row.push(r.loss_minority.to_string());
            row.push(r.grad_norm.to_string());
            row.push(r.zone.majority.as_str().into());
            row.push(r.zone.minority.as_str().into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One explicit step of the chosen integrator on `−∇F`.
pub fn flow_step<L: SplitLoss + ?Sized>(
    model: &L,
    field: Part,
    theta: &[f64],
    grad: &[f64],
    step: f64,
    integrator: Integrator,
) -> Vec<f64> {
    match integrator {
        Integrator::Euler => theta.iter().zip(grad).map(|(t, g)| t - step * g).collect(),
        Integrator::Rk4 => {
            let shift =
                |base: &[f64], k: &[f64], h: f64| -> Vec<f64> { base.iter().zip(k).map(|(b, v)| b - h * v).collect() };
            let k1 = grad.to_vec();
            let k2 = model.gradient(field, &shift(theta, &k1, step / 2.0));
            let k3 = model.gradient(field, &shift(theta, &k2, step / 2.0));
            let k4 = model.gradient(field, &shift(theta, &k3, step));
            theta
                .iter()
                .enumerate()
                .map(|(i, t)| t - step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    }
}

/// Integrates `θ' = −∇F(θ)` from `θ_init` with a fixed step.
pub fn integrate_flow<L: SplitLoss + ?Sized>(
    model: &L,
    field: Part,
    theta_init: &[f64],
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if theta_init.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta_init.len(),
        });
    }
    if !all_finite(theta_init) {
        return Err(Error::NonFinite("theta_init"));
    }
    if !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {}", opts.step)));
    }
    if !(opts.horizon.is_finite() && opts.horizon >= 0.0) {
        return Err(invalid("horizon", format!("must be nonnegative, got {}", opts.horizon)));
    }
    let stride = opts.stride.max(1);
    let n_steps = (opts.horizon / opts.step).round() as usize;
    let mut theta = theta_init.to_vec();
    let (rec, mut grad) = record(model, field, 0.0, &theta);
    let mut traj = Trajectory {
        field,
        step: opts.step,
        integrator: Some(opts.integrator),
        status: FlowStatus::HorizonReached,
        times: vec![0.0],
        points: vec![theta.clone()],
        records: vec![rec],
    };
    let stops = |r: &StepRecord, th: &[f64]| match &opts.stop {
        StoppingRule::Horizon => None,
        StoppingRule::GradNorm(tol) => (r.field_norm <= *tol).then_some(FlowStatus::Converged),
        StoppingRule::Custom(f) => f(r, th).then_some(FlowStatus::StoppedByRule),
    };
    if let Some(s) = stops(&traj.records[0], &theta) {
        traj.status = s;
        return Ok(traj);
    }
    for k in 1..=n_steps {
        if !all_finite(&grad) {
            return Err(Error::NonFinite("gradient during integration"));
        }
        theta = flow_step(model, field, &theta, &grad, opts.step, opts.integrator);
        let size = norm(&theta);
        if !(size <= DIVERGENCE_NORM) {
            return Err(Error::Diverged {
                iterations: k,
                norm: size,
                last: traj.points.last().cloned().unwrap_or_default(),
            });
        }
        let t = k as f64 * opts.step;
        let (rec, g) = record(model, field, t, &theta);
        grad = g;
        let stop = stops(&rec, &theta);
        if k % stride == 0 || k == n_steps || stop.is_some() {
            traj.times.push(t);
            traj.points.push(theta.clone());
            traj.records.push(rec);
        }
        if let Some(s) = stop {
            traj.status = s;
            return Ok(traj);
        }
    }
    Ok(traj)
}

/// Closed-form flow `θ(t) = θ̂_j + exp(−t H_j)(θ_init − θ̂_j)` of one part of a
/// grouped least-squares loss, where `H_j` is the constant Hessian of that
/// part.
#[derive(Clone, Debug)]
pub struct LinearFlow {
    pub target: Vec<f64>,
    eig: EigenDecomposition,
    coeffs: Vec<f64>,
    init: Vec<f64>,
}

impl LinearFlow {
    pub fn new(model: &QuadraticSplitLoss, part: Part, theta_init: &[f64]) -> Result<Self> {
        if theta_init.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: theta_init.len(),
            });
        }
        let target = model.minimizer(part)?;
        let eig = eigen_decompose(&model.hessian_matrix(part))?;
        let dev = sub(theta_init, &target);
        let coeffs = (0..dev.len()).map(|k| dot(&eig.vectors.column(k), &dev)).collect();
        Ok(Self {
            target,
            eig,
            coeffs,
            init: theta_init.to_vec(),
        })
    }

    /// Smallest eigenvalue of the Hessian, the slowest decay rate.
    pub fn rate_min(&self) -> f64 {
        self.eig.values[0]
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        if t == 0.0 {
            return self.init.clone();
        }
        let d = self.target.len();
        let mut out = self.target.clone();
        for k in 0..d {
            let w = self.coeffs[k] * (-t * self.eig.values[k]).exp();
            if w == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * self.eig.vectors[(i, k)];
            }
        }
        out
    }
}

/// Closed-form point of the flow of one part at time `t`.
pub fn exact_linear_flow(model: &QuadraticSplitLoss, theta_init: &[f64], t: f64, part: Part) -> Result<Vec<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be finite and nonnegative, got {t}")));
    }
    Ok(LinearFlow::new(model, part, theta_init)?.at(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveDistanceReport {
    pub sup_bound: f64,
    pub empirical_sup: f64,
    pub holds: bool,
    /// Grid times at which the pointwise bound fails.
    pub pointwise_violations: usize,
    pub pointwise_holds: bool,
    pub horizon: f64,
    pub grid_points: usize,
}

/// Compares `‖θ(t) − θ1(t)‖` for flows started at the same point with the
/// pointwise and uniform bounds
///
/// ```text
/// ‖θ̂ − θ̂1‖ + t ρ_max((n0/n) S0) e^{−t ρ_min((n1/n) S1)} (‖θ̂1‖ + ‖θ_init‖)
/// ‖θ̂ − θ̂1‖ + (‖θ̂1‖ + ‖θ_init‖)/e · ρ_max(n0 S0)/ρ_min(n1 S1)
/// ```
///
/// on `grid_points` equally spaced times over `[0, 20/λ]`, `λ` being the
/// slower of the two decay rates. Covariances are taken as `S_j + 2γI`.
pub fn curve_distance_bound(
    model: &QuadraticSplitLoss,
    theta_init: &[f64],
    grid_points: usize,
) -> Result<CurveDistanceReport> {
    if grid_points < 2 {
        return Err(invalid("grid_points", "need at least 2"));
    }
    let full = LinearFlow::new(model, Part::Total, theta_init)?;
    let maj = LinearFlow::new(model, Part::Majority, theta_init)?;
    let gap = distance(&full.target, &maj.target);
    let (_, h0_max) = rho_extremes(&model.hessian_matrix(Part::Minority))?;
    let (h1_min, _) = rho_extremes(&model.hessian_matrix(Part::Majority))?;
    let amp = norm(&maj.target) + norm(theta_init);
    let sup_bound = gap + amp / std::f64::consts::E * h0_max / h1_min;
    let horizon = 20.0 / full.rate_min().min(maj.rate_min());
    let dt = horizon / (grid_points - 1) as f64;
    let (sup, viol) = (0..grid_points)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * dt;
            let dist = distance(&full.at(t), &maj.at(t));
            let point_bound = gap + t * h0_max * (-t * h1_min).exp() * amp;
            (dist, usize::from(dist > point_bound))
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    Ok(CurveDistanceReport {
        sup_bound,
        empirical_sup: sup,
        holds: sup <= sup_bound,
        pointwise_violations: viol,
        pointwise_holds: viol == 0,
        horizon,
        grid_points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    /// Majority-adverse grid points of `K_{−2τ/δ}` farther than `2τ/δ`
    /// from every critical point of `L1`.
    pub violations: Vec<Vec<f64>>,
    /// Share of all grid points that are majority-adverse.
    pub adverse_fraction: f64,
    pub adverse_inner_points: usize,
    pub inner_points: usize,
    pub radius: f64,
    pub grid_per_axis: usize,
    pub grid_spacing: Vec<f64>,
}

/// Grid scan of the majority-adverse zone inside `K_{−2τ/δ}` against the
/// union of balls `B(θ̂1, 2τ/δ)`.
pub fn adverse_cover_check<L: SplitLoss + ?Sized>(
    model: &L,
    k: &RegionBox,
    constants: &RegionConstants,
    crit_l1: &[Vec<f64>],
    grid_per_axis: usize,
) -> Result<CoverReport> {
    let radius = constants.cover_radius();
    let pts = k.grid(grid_per_axis)?;
    let slack = 1e-12 * (1.0 + radius);
    let results: Vec<(bool, bool, Option<Vec<f64>>)> = pts
        .into_par_iter()
        .map(|p| {
            let adverse = classify_zone(model, &p).majority == Zone::Adverse;
            let inner = k.in_inner(&p, radius);
            let covered = crit_l1.iter().any(|c| distance(c, &p) <= radius + slack);
            let bad = (adverse && inner && !covered).then_some(p);
            (adverse, inner, bad)
        })
        .collect();
    let total = results.len();
    let adverse = results.iter().filter(|r| r.0).count();
    Ok(CoverReport {
        adverse_fraction: adverse as f64 / total as f64,
        adverse_inner_points: results.iter().filter(|r| r.0 && r.1).count(),
        inner_points: results.iter().filter(|r| r.1).count(),
        violations: results.into_iter().filter_map(|r| r.2).collect(),
        radius,
        grid_per_axis,
        grid_spacing: k.grid_spacing(grid_per_axis),
    })
}

/// Share of grid points of `K` in the majority-adverse zone.
pub fn adverse_fraction<L: SplitLoss + ?Sized>(model: &L, k: &RegionBox, grid_per_axis: usize) -> Result<f64> {
    let pts = k.grid(grid_per_axis)?;
    let n = pts.len();
    let hits = pts
        .into_par_iter()
        .filter(|p| classify_zone(model, p).majority == Zone::Adverse)
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub ok: bool,
    pub adverse_steps: usize,
    pub violations: usize,
    /// Largest increase of `L0` seen on an adverse step, net of slack.
    pub worst_excess: f64,
}

/// Checks that `L0` does not increase between consecutive records that
/// both lie in the majority-adverse zone, up to `1e-9` times the step.
pub fn lyapunov_minority_check(traj: &Trajectory) -> LyapunovReport {
    let mut adverse_steps = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (w, tw) in traj.records.windows(2).zip(traj.times.windows(2)) {
        if w[0].zone.majority != Zone::Adverse || w[1].zone.majority != Zone::Adverse {
            continue;
        }
        adverse_steps += 1;
        let slack = 1e-9 * (tw[1] - tw[0]);
        let excess = w[1].loss_minority - w[0].loss_minority - slack;
        worst = worst.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
    }
    LyapunovReport {
        ok: violations == 0,
        adverse_steps,
        violations,
        worst_excess: if adverse_steps == 0 { 0.0 } else { worst },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryWitness {
    pub location: Vec<f64>,
    /// Which critical set the point belongs to.
    pub loss: Part,
    pub positive_seen: bool,
    pub nonpositive_seen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub witnesses: Vec<BoundaryWitness>,
    pub all_witnessed: bool,
}

/// Probes each point of `crit L1 Δ crit L` at radii in `(0, probe_radius]`
/// with antithetic pairs and records whether both signs of `⟨∇L, ∇L1⟩`
/// occur, which places the point on the boundary of the majority-adverse
/// zone. Points closer than `1e-8` to the other set count as shared.
pub fn boundary_membership_check<L: SplitLoss + ?Sized>(
    model: &L,
    crit_l1: &[Vec<f64>],
    crit_l: &[Vec<f64>],
    probe_radius: f64,
    probe_count: usize,
    seed: u64,
) -> Result<BoundaryReport> {
    if !(probe_radius.is_finite() && probe_radius > 0.0) {
        return Err(invalid("probe_radius", format!("must be positive, got {probe_radius}")));
    }
    let shared = |p: &[f64], other: &[Vec<f64>]| other.iter().any(|q| distance(p, q) <= 1e-8);
    let mut targets: Vec<(Vec<f64>, Part)> = Vec::new();
    targets.extend(
        crit_l1
            .iter()
            .filter(|p| !shared(p, crit_l))
            .map(|p| (p.clone(), Part::Majority)),
    );
    targets.extend(
        crit_l
            .iter()
            .filter(|p| !shared(p, crit_l1))
            .map(|p| (p.clone(), Part::Total)),
    );
    let mut rng = rng::stream(seed, streams::PROBES);
    let mut witnesses = Vec::with_capacity(targets.len());
    for (loc, loss) in targets {
        let (mut pos, mut neg) = (false, false);
        for _ in 0..probe_count.max(1) {
            let r = probe_radius * (1.0 - rand::Rng::random::<f64>(&mut rng));
            let dir = rng::uniform_on_sphere(&mut rng, &vec![0.0; loc.len()], r);
            for sign in [1.0, -1.0] {
                let p: Vec<f64> = loc.iter().zip(&dir).map(|(a, b)| a + sign * b).collect();
                if classify_zone(model, &p).inner_majority > 0.0 {
                    pos = true;
                } else {
                    neg = true;
                }
            }
            if pos && neg {
                break;
            }
        }
        witnesses.push(BoundaryWitness {
            location: loc,
            loss,
            positive_seen: pos,
            nonpositive_seen: neg,
        });
    }
    Ok(BoundaryReport {
        all_witnessed: witnesses.iter().all(|w| w.positive_seen && w.nonpositive_seen),
        witnesses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorityAdverseBall {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Time along the construction curve where the alignment is smallest.
    pub t_center: f64,
    /// `⟨∇L0, ∇L⟩` at the center.
    pub alignment_at_center: f64,
    /// The center alignment is at most `−(n0/8n) ρ_min(S0) ρ_min(S) ‖θ̂ − θ̂0‖²`.
    pub depth_ok: bool,
    pub samples: usize,
    pub violations: usize,
    pub verified: bool,
}

/// Builds a ball inside the minority-adverse zone of a grouped least-squares
/// loss. The radius is
/// `ρ_min(S0) ρ_min(S) / (33 ρ_max(S0) ρ_max(S)) · ‖θ̂ − θ̂0‖`, and the
/// center minimizes `⟨∇L0, ∇L⟩` along `θ̂ + exp(−tS)(θ̂0 − θ̂)` for
/// `t ∈ [0, 1/ρ_min(S)]`. Covariances are taken as `S_j + 2γI`. The ball is
/// verified on `samples` uniform points.
pub fn minority_adverse_ball(model: &QuadraticSplitLoss, samples: usize, seed: u64) -> Result<MinorityAdverseBall> {
    let theta_hat = model.minimizer(Part::Total)?;
    let theta_hat0 = model.minimizer(Part::Minority)?;
    let sep = distance(&theta_hat, &theta_hat0);
    if sep <= 1e-14 * (1.0 + norm(&theta_hat)) {
        return Err(Error::Degenerate("full and minority minimizers coincide".into()));
    }
    let (s_min, s_max) = rho_extremes(&model.effective_covariance(Part::Total))?;
    let (s0_min, s0_max) = rho_extremes(&model.effective_covariance(Part::Minority))?;
    let radius = s0_min * s_min / (33.0 * s0_max * s_max) * sep;

    let curve = LinearFlow::new(model, Part::Total, &theta_hat0)?;
    let t_max = 1.0 / s_min;
    let alignment = |theta: &[f64]| {
        let (g1, g0) = model.split_gradients(theta);
        let g: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a + b).collect();
        dot(&g0, &g)
    };
    let along = |t: f64| alignment(&curve.at(t));
    let coarse = 200usize;
    let h = t_max / coarse as f64;
    let best = (0..=coarse)
        .map(|i| (i, along(i as f64 * h)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("nonempty scan");
    let (mut a, mut b) = (
        (best as f64 - 1.0).max(0.0) * h,
        (best as f64 + 1.0).min(coarse as f64) * h,
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (along(x1), along(x2));
    while b - a > 1e-8 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = along(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = along(x2);
        }
    }
    let mut t_center = 0.5 * (a + b);
    let mut value = along(t_center);
    let scan_best = along(best as f64 * h);
    if scan_best < value {
        t_center = best as f64 * h;
        value = scan_best;
    }
    let center = curve.at(t_center);
    let w0 = model.weight(Part::Minority);
    let depth = -(w0 / 8.0) * s0_min * s_min * sep * sep;

    let mut rng = rng::stream(seed, streams::SAMPLES);
    let violations = (0..samples)
        .filter(|_| alignment(&rng::uniform_in_ball(&mut rng, &center, radius)) > 0.0)
        .count();
    Ok(MinorityAdverseBall {
        center,
        radius,
        t_center,
        alignment_at_center: value,
        depth_ok: value <= depth,
        samples,
        violations,
        verified: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::loss_models::{make_quadratic, make_toy, GroupedDataset};

    #[test]
    fn toy_majority_flow_decays_like_exp() {
        let toy = make_toy(0.01, 1.0).unwrap();
        let tr = integrate_flow(&toy, Part::Majority, &[-2.0], &FlowOptions::euler(1e-3, 3.0)).unwrap();
        let x = tr.last()[0];
        assert!((x + 2.0 * (-3.0f64).exp()).abs() < 1e-3);
        let rk = integrate_flow(
            &toy,
            Part::Majority,
            &[-2.0],
            &FlowOptions::euler(1e-2, 3.0).with_integrator(Integrator::Rk4),
        )
        .unwrap();
        assert!((rk.last()[0] + 2.0 * (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn stationary_at_critical_point() {
        let toy = make_toy(0.1, 1.0).unwrap();
        let xh = toy.representative();
        let tr = integrate_flow(&toy, Part::Total, &[xh], &FlowOptions::euler(1e-2, 1.0)).unwrap();
        assert!(tr.points.iter().all(|p| (p[0] - xh).abs() < 1e-15));
    }

    #[test]
    fn grad_norm_stop() {
        let toy = make_toy(0.1, 1.0).unwrap();
        let opts = FlowOptions::euler(1e-2, 100.0).with_stop(StoppingRule::GradNorm(1e-6));
        let tr = integrate_flow(&toy, Part::Total, &[-2.0], &opts).unwrap();
        assert_eq!(tr.status, FlowStatus::Converged);
        assert!(tr.records.last().unwrap().field_norm <= 1e-6);
    }

    #[test]
    fn divergence_reported() {
        let toy = make_toy(0.1, 1.0).unwrap();
        let err = integrate_flow(&toy, Part::Total, &[1.0], &FlowOptions::euler(3.0, 300.0)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn toy_zone_signs() {
        let toy = make_toy(0.01, 1.0).unwrap();
        let xh = toy.representative();
        assert_eq!(classify_zone(&toy, &[0.5 * xh]).majority, Zone::Adverse);
        assert_eq!(classify_zone(&toy, &[2.0 * xh]).majority, Zone::Training);
        assert_eq!(classify_zone(&toy, &[-1.0]).majority, Zone::Training);
        let z = classify_zone(&toy, &[0.3]);
        let g = toy.gradient(Part::Total, &[0.3]);
        assert!((z.inner_majority + z.inner_minority - dot(&g, &g)).abs() < 1e-15);
    }

    #[test]
    fn exact_linear_flow_scalar() {
        let q = make_quadratic(GroupedDataset::toy_embedding(10, 1, 1.0).unwrap(), 0.0, vec![0.0]).unwrap();
        let xh = q.minimizer(Part::Total).unwrap()[0];
        assert_eq!(exact_linear_flow(&q, &[-2.0], 0.0, Part::Total).unwrap(), vec![-2.0]);
        let t = 0.7;
        let want = xh + (-t * 1.0f64).exp() * (-2.0 - xh);
        let got = exact_linear_flow(&q, &[-2.0], t, Part::Total).unwrap()[0];
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn minority_ball_scalar() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let ds = GroupedDataset::new(x, vec![0.0, 0.0, 3.0], vec![1, 1, 0]).unwrap();
        let q = make_quadratic(ds, 0.0, vec![0.0]).unwrap();
        let ball = minority_adverse_ball(&q, 200, 0).unwrap();
        assert!((ball.radius - (1.0 - 3.0) / -33.0).abs() < 1e-12);
        assert!(ball.verified && ball.depth_ok);
    }
}

//! Critical points of split losses and their certification.
//!
//! The central question is how far the critical points of the full loss `L`
//! sit from those of the majority loss `L1`. Over a box `K`, four constants
//! control the answer:
//!
//! * `δ`: a floor on `ρ_min(∇²L1)` wherever `‖∇L1‖ ≤ c`;
//! * `c`: the gradient threshold defining that sub-level set;
//! * `M`: a Lipschitz constant of both Hessians;
//! * `τ`: a bound on `‖∇L0‖` and `ρ_max(∇²L0)` over `K`.
//!
//! When `τ < min(c/2, δ/8, δ²/(32M))` and both critical sets stay `6τ/δ` away
//! from the boundary of `K`, the two critical sets pair up one to one with
//! distances at most `4τ/δ` and identical Morse indices. This module
//! estimates the constants, finds critical points by multi-start Newton,
//! pairs them, and evaluates the closed-form linear-regression bounds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, distance, norm, sub, Matrix};
use crate::loss_models::{Part, QuadraticSplitLoss, SplitLoss};
use crate::rng::{self, streams};
use crate::spectral::{
    abs_extremes, default_zero_tol, eigenvalues, morse_index_of, rho_max, rho_min, singular_extremes, SymmetricMatrix,
};

/// Largest grid a constant estimation may visit.
pub const MAX_GRID_POINTS: usize = 2_000_000;

/// Axis-aligned box `K = [lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl RegionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(invalid("region", "dimension must be at least 1"));
        }
        if !(all_finite(&lower) && all_finite(&upper)) {
            return Err(Error::NonFinite("region bounds"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] >= upper[i]) {
            return Err(invalid(
                "region",
                format!("lower[{i}] = {} is not below upper[{i}] = {}", lower[i], upper[i]),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// Cube of the given half-width around `center`.
    pub fn around(center: &[f64], half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid("half_width", format!("must be positive, got {half_width}")));
        }
        Self::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (l, u))| *l <= *t && *t <= *u)
    }

    /// Distance from an interior point to the boundary; negative outside.
    pub fn boundary_distance(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| (t - l).min(u - t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Membership in `K_{-r}`, the points at least `r` from the boundary.
    pub fn in_inner(&self, theta: &[f64], r: f64) -> bool {
        self.boundary_distance(theta) >= r
    }

    pub fn grid_spacing(&self, per_axis: usize) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / (per_axis.max(2) - 1) as f64)
            .collect()
    }

    fn grid_len(&self, per_axis: usize) -> Option<usize> {
        (0..self.dim()).try_fold(1usize, |acc, _| acc.checked_mul(per_axis))
    }

    /// The `index`-th point of the regular grid with `per_axis` points per
    /// axis, endpoints included, first axis varying slowest.
    pub fn grid_point(&self, per_axis: usize, mut index: usize) -> Vec<f64> {
        let h = self.grid_spacing(per_axis);
        let mut p = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let k = index % per_axis;
            index /= per_axis;
            p[a] = if k + 1 == per_axis {
                self.upper[a]
            } else {
                self.lower[a] + k as f64 * h[a]
            };
        }
        p
    }

    pub fn grid(&self, per_axis: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.checked_grid_len(per_axis)?;
        Ok((0..n).map(|i| self.grid_point(per_axis, i)).collect())
    }

    fn checked_grid_len(&self, per_axis: usize) -> Result<usize> {
        if per_axis < 2 {
            return Err(invalid("grid_per_axis", "need at least 2 points per axis"));
        }
        match self.grid_len(per_axis) {
            Some(n) if n <= MAX_GRID_POINTS => Ok(n),
            _ => Err(invalid(
                "grid_per_axis",
                format!(
                    "{per_axis}^{} grid points exceed the limit of {MAX_GRID_POINTS}",
                    self.dim()
                ),
            )),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..=*u))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        distance(&self.lower, &self.upper)
    }
}

/// The constants `(δ, c, M, τ)` over a region, with their validity flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionConstants {
    pub delta: f64,
    pub c: f64,
    pub m: f64,
    pub tau: f64,
    /// `M` is an exact bound rather than a sampled lower estimate.
    pub m_exact: bool,
    /// `τ < min(c/2, δ/8, δ²/(32M))`.
    pub condition_ok: bool,
    /// Both critical sets keep distance `6τ/δ` from the boundary. Unknown
    /// until the critical sets have been computed.
    pub boundary_ok: Option<bool>,
    /// Max of the largest absolute first and second partial derivatives of
    /// `L0` over the grid.
    pub minority_seminorm: f64,
    pub grid_per_axis: usize,
    pub grid_spacing: Vec<f64>,
    pub sample_count: usize,
    pub sublevel_count: usize,
}

impl RegionConstants {
    /// Constants supplied by hand; the condition flag is recomputed.
    pub fn from_values(delta: f64, c: f64, m: f64, tau: f64) -> Result<Self> {
        for (name, v) in [("delta", delta), ("c", c), ("M", m), ("tau", tau)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(
                    "constants",
                    format!("{name} = {v} must be finite and nonnegative"),
                ));
            }
        }
        let mut k = Self {
            delta,
            c,
            m,
            tau,
            m_exact: true,
            condition_ok: false,
            boundary_ok: None,
            minority_seminorm: tau,
            grid_per_axis: 0,
            grid_spacing: Vec::new(),
            sample_count: 0,
            sublevel_count: 0,
        };
        k.condition_ok = k.condition_holds();
        Ok(k)
    }

    /// `min(c/2, δ/8, δ²/(32M))`, with the last term dropped when `M = 0`.
    pub fn threshold(&self) -> f64 {
        let lip = if self.m > 0.0 {
            self.delta * self.delta / (32.0 * self.m)
        } else {
            f64::INFINITY
        };
        (self.c / 2.0).min(self.delta / 8.0).min(lip)
    }

    pub fn condition_holds(&self) -> bool {
        self.delta > 0.0 && self.c > 0.0 && self.tau < self.threshold()
    }

    /// Pairing radius `4τ/δ`.
    pub fn gap_bound(&self) -> f64 {
        4.0 * self.tau / self.delta
    }

    /// Cover radius `2τ/δ` of the majority-adverse zone.
    pub fn cover_radius(&self) -> f64 {
        2.0 * self.tau / self.delta
    }

    /// Required boundary clearance `6τ/δ`, also the strong-convexity radius.
    pub fn boundary_margin(&self) -> f64 {
        6.0 * self.tau / self.delta
    }

    /// Minimum spacing of distinct critical points: `δ/(32M)`, or `1e-6`
    /// when `M = 0`.
    pub fn dedup_separation(&self) -> f64 {
        if self.m > 0.0 && self.delta > 0.0 {
            self.delta / (32.0 * self.m)
        } else {
            1e-6
        }
    }

    /// Records whether every point of both sets clears the boundary.
    pub fn check_boundary(
        &mut self,
        k: &RegionBox,
        crit_majority: &[CriticalPoint],
        crit_total: &[CriticalPoint],
    ) -> bool {
        let margin = self.boundary_margin();
        let ok = crit_majority
            .iter()
            .chain(crit_total)
            .all(|p| k.boundary_distance(&p.location) >= margin);
        self.boundary_ok = Some(ok);
        ok
    }

    pub fn certified(&self) -> bool {
        self.condition_ok && self.boundary_ok == Some(true)
    }
}

/// Default gradient threshold when none is given: `4τ`, or `1` when `τ = 0`.
pub fn default_c(tau: f64) -> f64 {
    if tau > 0.0 {
        4.0 * tau
    } else {
        1.0
    }
}

struct GridSample {
    g1: f64,
    g0: f64,
    g0_inf: f64,
    h1: SymmetricMatrix,
    h0: SymmetricMatrix,
}

/// Estimates `(δ, c, M, τ)` over `K` on a regular grid.
///
/// `τ` is the grid maximum of `‖∇L0‖` and `ρ_max(∇²L0)`; the grid contains
/// the vertices of `K`, so the value is exact when `∇L0` is affine. `δ` is
/// the minimum of `ρ_min(∇²L1)` over the grid points and majority critical
/// points with `‖∇L1‖ ≤ c`. `M` comes from the model when it has an exact
/// bound, otherwise from Hessian differences of adjacent grid points.
pub fn estimate_constants<L: SplitLoss + ?Sized>(
    model: &L,
    k: &RegionBox,
    grid_per_axis: usize,
    c_choice: Option<f64>,
) -> Result<RegionConstants> {
    if grid_per_axis < 3 {
        return Err(invalid(
            "grid_per_axis",
            format!("must be at least 3, got {grid_per_axis}"),
        ));
    }
    if k.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: k.dim(),
        });
    }
    if let Some(c) = c_choice {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("c", format!("must be positive, got {c}")));
        }
    }
    let n = k.checked_grid_len(grid_per_axis)?;
    let constant = model.constant_hessian();
    let fixed = constant.then(|| {
        let c = k.center();
        (model.hessian(Part::Majority, &c), model.hessian(Part::Minority, &c))
    });
    let samples: Vec<GridSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = k.grid_point(grid_per_axis, i);
            let (g1, g0) = model.split_gradients(&p);
            let (h1, h0) = match &fixed {
                Some((a, b)) => (a.clone(), b.clone()),
                None => (model.hessian(Part::Majority, &p), model.hessian(Part::Minority, &p)),
            };
            GridSample {
                g1: norm(&g1),
                g0: norm(&g0),
                g0_inf: g0.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                h1,
                h0,
            }
        })
        .collect();
    if samples.iter().any(|s| !(s.g1.is_finite() && s.g0.is_finite())) {
        return Err(Error::NonFinite("gradient on region grid"));
    }

    let mut tau = 0.0f64;
    let mut seminorm = 0.0f64;
    for s in &samples {
        let (_, hmax) = abs_extremes(&eigenvalues(&s.h0)?);
        let entry = s.h0.matrix().as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        tau = tau.max(s.g0).max(hmax);
        seminorm = seminorm.max(s.g0_inf).max(entry);
    }
    let c = c_choice.unwrap_or_else(|| default_c(tau));

    let mut delta = f64::INFINITY;
    let mut sublevel = 0usize;
    for s in &samples {
        if s.g1 <= c {
            sublevel += 1;
            delta = delta.min(rho_min(&s.h1)?);
        }
    }
    let search = SearchOptions {
        n_starts: 8 + 4 * k.dim(),
        ..SearchOptions::default()
    };
    for p in find_critical_points(model, Part::Majority, k, &search)? {
        sublevel += 1;
        delta = delta.min(p.hess_min_abs_eig);
    }
    if sublevel == 0 {
        return Err(Error::EmptySublevelSet { c });
    }

    let (m, m_exact) = match model.exact_hessian_lipschitz(k.lower(), k.upper()) {
        Some(m) => (m, true),
        None => (sampled_lipschitz(k, grid_per_axis, &samples)?, false),
    };

    let mut out = RegionConstants {
        delta,
        c,
        m,
        tau,
        m_exact,
        condition_ok: false,
        boundary_ok: None,
        minority_seminorm: seminorm,
        grid_per_axis,
        grid_spacing: k.grid_spacing(grid_per_axis),
        sample_count: n,
        sublevel_count: sublevel,
    };
    out.condition_ok = out.condition_holds();
    Ok(out)
}

fn sampled_lipschitz(k: &RegionBox, per_axis: usize, samples: &[GridSample]) -> Result<f64> {
    let d = k.dim();
    let h = k.grid_spacing(per_axis);
    let mut worst = 0.0f64;
    for i in 0..samples.len() {
        let mut stride = 1usize;
        for a in (0..d).rev() {
            let coord = (i / stride) % per_axis;
            if coord + 1 < per_axis {
                let j = i + stride;
                for (x, y) in [(&samples[i].h1, &samples[j].h1), (&samples[i].h0, &samples[j].h0)] {
                    let diff = x.sub(y);
                    worst = worst.max(rho_max(&diff)? / h[a]);
                }
            }
            stride *= per_axis;
        }
    }
    Ok(worst)
}

/// A vector field with Jacobian access.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Vec<f64>;
    fn jacobian(&self, theta: &[f64]) -> Matrix;
}

/// `∇` of one part of a split loss; its Jacobian is the Hessian.
pub struct GradientField<'a, L: SplitLoss + ?Sized> {
    pub model: &'a L,
    pub part: Part,
}

impl<L: SplitLoss + ?Sized> VectorField for GradientField<'_, L> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn value(&self, theta: &[f64]) -> Vec<f64> {
        self.model.gradient(self.part, theta)
    }
    fn jacobian(&self, theta: &[f64]) -> Matrix {
        self.model.hessian(self.part, theta).into_matrix()
    }
}

/// A field given by two closures.
pub struct FnField<F, J> {
    pub dim: usize,
    pub value: F,
    pub jacobian: J,
}

impl<F, J> VectorField for FnField<F, J>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    J: Fn(&[f64]) -> Matrix + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64]) -> Vec<f64> {
        (self.value)(theta)
    }
    fn jacobian(&self, theta: &[f64]) -> Matrix {
        (self.jacobian)(theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Random pairs drawn from the ball to estimate the second constant.
    pub k2_samples: usize,
    pub seed: u64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            k2_samples: 64,
            seed: 0,
        }
    }
}

/// The two Kantorovich quantities around `θ*` for radius `R̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KantorovichCertificate {
    pub r_tilde: f64,
    /// `‖J(θ*)⁻¹ G(θ*)‖`, to be at most `R̃/2`.
    pub k1_value: f64,
    /// Sampled max of `ρ_max(J(θ*)⁻¹(J(θ) − J(θ'))) / ‖θ − θ'‖`, to be at
    /// most `1/R̃`.
    pub k2_estimate: f64,
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonResult {
    pub root: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub distance_from_start: f64,
    pub certificate: KantorovichCertificate,
}

/// Newton iteration from `θ*` together with a Kantorovich certificate for
/// the ball `B(θ*, R̃)`.
pub fn newton_kantorovich_solve<G: VectorField + ?Sized>(
    field: &G,
    theta_star: &[f64],
    r_tilde: f64,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    if theta_star.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: theta_star.len(),
        });
    }
    if !all_finite(theta_star) {
        return Err(Error::NonFinite("theta_star"));
    }
    if !(r_tilde.is_finite() && r_tilde > 0.0) {
        return Err(invalid("r_tilde", format!("must be positive, got {r_tilde}")));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let j0 = field.jacobian(theta_star);
    let (smin, _) = singular_extremes(&j0)?;
    if smin <= 1e-12 {
        return Err(Error::Singular {
            context: "Jacobian at theta_star".into(),
            rho_min: smin,
        });
    }
    let j0_inv = j0.inverse()?;
    let g0 = field.value(theta_star);
    let k1 = norm(&j0_inv.matvec(&g0));

    let mut rng = rng::stream(opts.seed, streams::SAMPLES);
    let mut k2 = 0.0f64;
    for s in 0..opts.k2_samples {
        let a = if s % 4 == 0 {
            theta_star.to_vec()
        } else {
            rng::uniform_in_ball(&mut rng, theta_star, r_tilde)
        };
        let b = rng::uniform_in_ball(&mut rng, theta_star, r_tilde);
        let gap = distance(&a, &b);
        if gap <= 1e-14 * r_tilde {
            continue;
        }
        let diff = field.jacobian(&a).sub(&field.jacobian(&b));
        let (_, s_max) = singular_extremes(&j0_inv.matmul(&diff))?;
        k2 = k2.max(s_max / gap);
    }
    let certificate = KantorovichCertificate {
        r_tilde,
        k1_value: k1,
        k2_estimate: k2,
        certified: k1 <= r_tilde / 2.0 && k2 <= 1.0 / r_tilde,
    };

    let limit = 1e6 * norm(theta_star).max(1.0);
    let mut theta = theta_star.to_vec();
    let mut g = g0;
    for it in 0..=opts.max_iter {
        let res = norm(&g);
        if !res.is_finite() {
            return Err(Error::NonFinite("field value during Newton iteration"));
        }
        if res <= opts.tol {
            return Ok(NewtonResult {
                distance_from_start: distance(&theta, theta_star),
                root: theta,
                residual: res,
                iterations: it,
                certificate,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let step = field.jacobian(&theta).solve(&g)?;
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        let size = norm(&theta);
        if !(size <= limit) {
            return Err(Error::Diverged {
                iterations: it + 1,
                norm: size,
                last: theta,
            });
        }
        g = field.value(&theta);
    }
    Err(Error::MaxIterations(opts.max_iter))
}

/// A critical point of one part of a split loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub grad_norm: f64,
    pub morse_index: usize,
    pub zero_eigenvalues: usize,
    pub degenerate: bool,
    pub hess_min_eig: f64,
    pub hess_max_eig: f64,
    pub hess_min_abs_eig: f64,
    pub loss: Part,
}

impl CriticalPoint {
    /// Classifies `location` for the given part.
    pub fn at<L: SplitLoss + ?Sized>(model: &L, part: Part, location: Vec<f64>) -> Result<Self> {
        let grad_norm = norm(&model.gradient(part, &location));
        let vals = eigenvalues(&model.hessian(part, &location))?;
        let idx = morse_index_of(&vals, default_zero_tol(&vals));
        let (amin, _) = abs_extremes(&vals);
        Ok(Self {
            grad_norm,
            morse_index: idx.negatives,
            zero_eigenvalues: idx.zeros,
            degenerate: idx.zeros > 0,
            hess_min_eig: vals[0],
            hess_max_eig: *vals.last().expect("nonempty spectrum"),
            hess_min_abs_eig: amin,
            loss: part,
            location,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Gradient-norm tolerance for accepting a root.
    pub tol: f64,
    pub max_iter: usize,
    /// Points closer than this are merged; `None` uses `1e-6`.
    pub separation: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_starts: 32,
            seed: 0,
            tol: 1e-10,
            max_iter: 200,
            separation: None,
        }
    }
}

fn newton_from<L: SplitLoss + ?Sized>(
    model: &L,
    part: Part,
    start: Vec<f64>,
    max_step: f64,
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let mut theta = start;
    for _ in 0..max_iter {
        let g = model.gradient(part, &theta);
        let gn = norm(&g);
        if !gn.is_finite() {
            return None;
        }
        if gn <= tol {
            return Some(theta);
        }
        let h = model.hessian(part, &theta);
        let mut step = h.matrix().solve(&g).ok()?;
        let len = norm(&step);
        if len > max_step {
            for s in &mut step {
                *s *= max_step / len;
            }
        }
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        if !all_finite(&theta) {
            return None;
        }
    }
    let g = model.gradient(part, &theta);
    (norm(&g) <= tol).then_some(theta)
}

/// Multi-start Newton search for the critical points of one part inside `K`.
///
/// Starts are the box center plus uniform samples. Roots are sorted
/// lexicographically and merged when closer than the separation threshold,
/// keeping the one with the smaller gradient norm.
pub fn find_critical_points<L: SplitLoss + ?Sized>(
    model: &L,
    part: Part,
    k: &RegionBox,
    opts: &SearchOptions,
) -> Result<Vec<CriticalPoint>> {
    if opts.n_starts == 0 {
        return Err(invalid("n_starts", "must be at least 1"));
    }
    if k.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: k.dim(),
        });
    }
    let mut rng = rng::stream(opts.seed, streams::MULTISTART);
    let mut starts = vec![k.center()];
    starts.extend((1..opts.n_starts).map(|_| k.sample(&mut rng)));
    let max_step = 0.25 * k.diameter();
    let mut roots: Vec<Vec<f64>> = starts
        .into_par_iter()
        .filter_map(|s| newton_from(model, part, s, max_step, opts.tol, opts.max_iter))
        .filter(|r| k.contains(r))
        .collect();
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sep = opts.separation.unwrap_or(1e-6);
    let mut kept: Vec<CriticalPoint> = Vec::new();
    for r in roots {
        let cand = CriticalPoint::at(model, part, r)?;
        match kept.iter_mut().find(|p| distance(&p.location, &cand.location) <= sep) {
            Some(existing) => {
                if cand.grad_norm < existing.grad_norm {
                    *existing = cand;
                }
            }
            None => kept.push(cand),
        }
    }
    Ok(kept)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapPair {
    pub stereotypical: CriticalPoint,
    pub representative: CriticalPoint,
    pub distance: f64,
    pub index_match: bool,
    /// Critical points of `L` found within the pairing radius.
    pub candidates: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub pairs: Vec<GapPair>,
    /// Critical points of `L1` with no critical point of `L` within `4τ/δ`.
    pub unpaired_stereotypical: Vec<CriticalPoint>,
    /// Critical points of `L` with no critical point of `L1` within `4τ/δ`.
    pub unpaired_representative: Vec<CriticalPoint>,
    /// Hausdorff distance between the two sets; absent when exactly one of
    /// them is empty.
    pub hausdorff: Option<f64>,
    pub bound: f64,
    pub bound_satisfied: bool,
    pub ambiguous: bool,
    pub certified: bool,
    pub constants: RegionConstants,
}

/// Region chosen by [`auto_region`] with its constants and gap report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutoRegion {
    pub region: RegionBox,
    pub half_width: f64,
    pub report: GapReport,
}

/// Tries cubes of half-width `base · 2^k`, `k = 0..steps`, around `anchor`
/// and returns the largest one whose gap report is certified.
pub fn auto_region<L: SplitLoss + ?Sized>(
    model: &L,
    anchor: &[f64],
    base: f64,
    steps: usize,
    grid_per_axis: usize,
    opts: &SearchOptions,
) -> Result<AutoRegion> {
    if !(base.is_finite() && base > 0.0) {
        return Err(invalid("half_width", format!("must be positive, got {base}")));
    }
    let mut best = None;
    for k in 0..steps.max(1) {
        let hw = base * 2f64.powi(k as i32);
        let region = RegionBox::around(anchor, hw)?;
        let constants = match estimate_constants(model, &region, grid_per_axis, None) {
            Ok(c) => c,
            Err(Error::EmptySublevelSet { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !constants.condition_ok {
            continue;
        }
        let report = stereotype_gap(model, &region, &constants, opts)?;
        if report.certified {
            best = Some(AutoRegion {
                region,
                half_width: hw,
                report,
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("no region on the ladder certifies the constants".into()))
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Some(0.0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let one_way = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| distance(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0f64, f64::max)
    };
    Some(one_way(a, b).max(one_way(b, a)))
}

/// Pairs the critical points of `L1` and `L` inside `K` and compares their
/// distances with `4τ/δ`.
pub fn stereotype_gap<L: SplitLoss + ?Sized>(
    model: &L,
    k: &RegionBox,
    constants: &RegionConstants,
    opts: &SearchOptions,
) -> Result<GapReport> {
    let opts = SearchOptions {
        separation: opts.separation.or(Some(constants.dedup_separation())),
        ..opts.clone()
    };
    let crit1 = find_critical_points(model, Part::Majority, k, &opts)?;
    let crit = find_critical_points(model, Part::Total, k, &opts)?;
    gap_from_sets(k, constants, crit1, crit)
}

/// [`stereotype_gap`] on critical sets computed elsewhere.
pub fn gap_from_sets(
    k: &RegionBox,
    constants: &RegionConstants,
    crit1: Vec<CriticalPoint>,
    crit: Vec<CriticalPoint>,
) -> Result<GapReport> {
    let mut constants = constants.clone();
    constants.check_boundary(k, &crit1, &crit);
    let bound = constants.gap_bound();
    let slack = 1e-12 * (1.0 + bound);
    let mut pairs = Vec::new();
    let mut unpaired_stereotypical = Vec::new();
    let mut ambiguous = false;
    for p in &crit1 {
        let near: Vec<&CriticalPoint> = crit
            .iter()
            .filter(|q| distance(&p.location, &q.location) <= bound + slack)
            .collect();
        if near.len() > 1 {
            ambiguous = true;
        }
        match near
            .iter()
            .min_by(|a, b| distance(&p.location, &a.location).total_cmp(&distance(&p.location, &b.location)))
        {
            Some(q) => pairs.push(GapPair {
                distance: distance(&p.location, &q.location),
                index_match: p.morse_index == q.morse_index,
                candidates: near.len(),
                stereotypical: p.clone(),
                representative: (*q).clone(),
            }),
            None => unpaired_stereotypical.push(p.clone()),
        }
    }
    let unpaired_representative: Vec<CriticalPoint> = crit
        .iter()
        .filter(|q| {
            !crit1
                .iter()
                .any(|p| distance(&p.location, &q.location) <= bound + slack)
        })
        .cloned()
        .collect();
    let a: Vec<Vec<f64>> = crit1.iter().map(|p| p.location.clone()).collect();
    let b: Vec<Vec<f64>> = crit.iter().map(|p| p.location.clone()).collect();
    let h = hausdorff(&a, &b);
    let bound_satisfied = !ambiguous
        && unpaired_stereotypical.is_empty()
        && unpaired_representative.is_empty()
        && pairs.iter().all(|p| p.index_match && p.distance <= bound + slack)
        && h.is_some_and(|h| h <= bound + slack);
    Ok(GapReport {
        pairs,
        unpaired_stereotypical,
        unpaired_representative,
        hausdorff: h,
        bound,
        bound_satisfied,
        ambiguous,
        certified: constants.certified(),
        constants,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub min_eigenvalue: f64,
    pub floor: f64,
    pub margin: f64,
    pub ok: bool,
}

/// Samples `λ_min(∇²L)` over `B(center, radius)` and compares it with
/// `floor`, typically `δ/8` on the ball of radius `6τ/δ`.
pub fn local_strong_convexity_check<L: SplitLoss + ?Sized>(
    model: &L,
    center: &[f64],
    radius: f64,
    floor: f64,
    samples: usize,
    seed: u64,
) -> Result<ConvexityCheck> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(invalid("radius", format!("must be nonnegative, got {radius}")));
    }
    let mut rng = rng::stream(seed, streams::SAMPLES);
    let mut pts = vec![center.to_vec()];
    if !model.constant_hessian() {
        pts.extend((0..samples).map(|_| rng::uniform_in_ball(&mut rng, center, radius)));
    }
    let mut lo = f64::INFINITY;
    for p in &pts {
        lo = lo.min(eigenvalues(&model.hessian(Part::Total, p))?[0]);
    }
    let slack = 1e-12 * floor.abs().max(1.0);
    Ok(ConvexityCheck {
        min_eigenvalue: lo,
        floor,
        margin: lo - floor,
        ok: lo >= floor - slack,
    })
}

/// `(θ̂, θ̂1, θ̂0)` of a grouped least-squares loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClosedForms {
    pub theta_hat: Vec<f64>,
    pub theta_hat1: Vec<f64>,
    pub theta_hat0: Vec<f64>,
}

pub fn linear_closed_forms(model: &QuadraticSplitLoss) -> Result<LinearClosedForms> {
    Ok(LinearClosedForms {
        theta_hat: model.minimizer(Part::Total)?,
        theta_hat1: model.minimizer(Part::Majority)?,
        theta_hat0: model.minimizer(Part::Minority)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGapBound {
    pub bound: f64,
    pub actual_gap: f64,
    pub holds: bool,
}

/// `‖θ̂ − θ̂1‖` against `2 ρ_max(n0 S0) / ρ_min(n1 S1) · (1 + ‖θ̂1 − θ̂0‖)`,
/// with each covariance taken as `S_j + 2γI`.
pub fn linear_gap_bound(model: &QuadraticSplitLoss) -> Result<LinearGapBound> {
    let cf = linear_closed_forms(model)?;
    let d = model.dataset();
    let top = rho_max(&model.effective_covariance(Part::Minority).scaled(d.n0() as f64))?;
    let bottom = rho_min(&model.effective_covariance(Part::Majority).scaled(d.n1() as f64))?;
    let bound = 2.0 * top / bottom * (1.0 + distance(&cf.theta_hat1, &cf.theta_hat0));
    let actual_gap = distance(&cf.theta_hat, &cf.theta_hat1);
    Ok(LinearGapBound {
        bound,
        actual_gap,
        holds: actual_gap <= bound,
    })
}

/// Residual `‖(S + 2γI)θ̂ − (b + 2γε)‖` of the normal equations.
pub fn normal_equation_residual(model: &QuadraticSplitLoss, part: Part, theta: &[f64]) -> f64 {
    let lhs = model.effective_covariance(part).matvec(theta);
    let rhs: Vec<f64> = model
        .cross_term(part)
        .iter()
        .zip(model.center())
        .map(|(b, e)| b + 2.0 * model.gamma() * e)
        .collect();
    norm(&sub(&lhs, &rhs))
}

//! Split losses `L = L1 + L0` and the concrete families used throughout the
//! crate.
//!
//! Every family implements [`SplitLoss`], which exposes the majority part
//! `L1` and the minority part `L0` separately. The total is always formed as
//! their sum, so additivity holds by construction. The checked entry points
//! [`eval_split`], [`eval_gradients`] and [`eval_hessians`] validate the
//! parameter vector before evaluating.

mod dataset;
mod mlp;
mod quadratic;
mod toy;

pub use dataset::GroupedDataset;
pub use mlp::{MlpArchitecture, MlpClassifierLoss};
pub use quadratic::{make_quadratic, QuadraticSplitLoss};
pub use toy::{make_double_well, make_toy, DoubleWellLoss, ToyScalarLoss};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{add, all_finite, Matrix};
use crate::spectral::SymmetricMatrix;

/// A finite parameter vector of dimension at least one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("theta", "dimension must be at least 1"));
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Vec<f64> {
        p.0
    }
}

/// Which part of a split loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Total,
    Majority,
    Minority,
}

/// One value per part of the split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split<T> {
    pub total: T,
    pub majority: T,
    pub minority: T,
}

impl<T> Split<T> {
    pub fn get(&self, part: Part) -> &T {
        match part {
            Part::Total => &self.total,
            Part::Majority => &self.majority,
            Part::Minority => &self.minority,
        }
    }
}

/// A twice-differentiable loss split into a majority and a minority part.
///
/// Both parts are normalized by the total sample count. Implementations
/// only provide the parts; totals are derived by summation.
pub trait SplitLoss: Send + Sync {
    fn dim(&self) -> usize;

    /// `(L1, L0)`
    fn split_values(&self, theta: &[f64]) -> (f64, f64);

    /// `(grad L1, grad L0)`
    fn split_gradients(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>);

    /// Closed-form `(hess L1, hess L0)` when the family has one.
    fn split_hessians(&self, _theta: &[f64]) -> Option<(Matrix, Matrix)> {
        None
    }

    /// True when the Hessians do not depend on `theta`.
    fn constant_hessian(&self) -> bool {
        false
    }

    /// An exact Lipschitz constant of both Hessians over the box
    /// `[lower, upper]`, when the family admits one.
    fn exact_hessian_lipschitz(&self, _lower: &[f64], _upper: &[f64]) -> Option<f64> {
        if self.constant_hessian() {
            Some(0.0)
        } else {
            None
        }
    }

    fn value(&self, part: Part, theta: &[f64]) -> f64 {
        let (l1, l0) = self.split_values(theta);
        match part {
            Part::Total => l1 + l0,
            Part::Majority => l1,
            Part::Minority => l0,
        }
    }

    fn gradient(&self, part: Part, theta: &[f64]) -> Vec<f64> {
        let (g1, g0) = self.split_gradients(theta);
        match part {
            Part::Total => add(&g1, &g0),
            Part::Majority => g1,
            Part::Minority => g0,
        }
    }

    /// Hessian of one part, closed form or central differences of the
    /// gradient.
    fn hessian(&self, part: Part, theta: &[f64]) -> SymmetricMatrix {
        match self.split_hessians(theta) {
            Some((h1, h0)) => SymmetricMatrix::symmetrize(&match part {
                Part::Total => h1.add(&h0),
                Part::Majority => h1,
                Part::Minority => h0,
            }),
            None => fd_hessian_of_gradient(|t| self.gradient(part, t), theta, FD_HESSIAN_STEP),
        }
    }
}

const FD_HESSIAN_STEP: f64 = 1e-5;

fn check_theta(dim: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: theta.len(),
        });
    }
    if !all_finite(theta) {
        return Err(Error::NonFinite("theta"));
    }
    Ok(())
}

/// `(L, L1, L0)` at `theta`.
pub fn eval_split<M: SplitLoss + ?Sized>(model: &M, theta: &[f64]) -> Result<Split<f64>> {
    check_theta(model.dim(), theta)?;
    let (l1, l0) = model.split_values(theta);
    if !(l1.is_finite() && l0.is_finite()) {
        return Err(Error::NonFinite("loss value"));
    }
    Ok(Split {
        total: l1 + l0,
        majority: l1,
        minority: l0,
    })
}

pub fn eval_gradients<M: SplitLoss + ?Sized>(model: &M, theta: &[f64]) -> Result<Split<Vec<f64>>> {
    check_theta(model.dim(), theta)?;
    let (g1, g0) = model.split_gradients(theta);
    if !(all_finite(&g1) && all_finite(&g0)) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(Split {
        total: add(&g1, &g0),
        majority: g1,
        minority: g0,
    })
}

pub fn eval_hessians<M: SplitLoss + ?Sized>(model: &M, theta: &[f64]) -> Result<Split<SymmetricMatrix>> {
    check_theta(model.dim(), theta)?;
    let (h1, h0) = match model.split_hessians(theta) {
        Some((h1, h0)) => (SymmetricMatrix::new(h1)?, SymmetricMatrix::new(h0)?),
        None => (
            model.hessian(Part::Majority, theta),
            model.hessian(Part::Minority, theta),
        ),
    };
    if !(h1.matrix().is_finite() && h0.matrix().is_finite()) {
        return Err(Error::NonFinite("hessian"));
    }
    Ok(Split {
        total: h1.add(&h0),
        majority: h1,
        minority: h0,
    })
}

/// Requested derivative order for [`finite_diff_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdOrder {
    Gradient,
    Hessian,
}

#[derive(Clone, Debug)]
pub enum FdEstimate {
    Gradient(Vec<f64>),
    Hessian(SymmetricMatrix),
}

fn check_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step >= 1e-12) {
        return Err(invalid("step", format!("must be at least 1e-12, got {step}")));
    }
    Ok(())
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        x[k] = theta[k] + step;
        let fp = f(&x);
        x[k] = theta[k] - step;
        let fm = f(&x);
        x[k] = theta[k];
        g.push((fp - fm) / (2.0 * step));
    }
    Ok(g)
}

/// Central-difference second derivatives of a scalar function.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, theta: &[f64], step: f64) -> Result<SymmetricMatrix> {
    check_step(step)?;
    let d = theta.len();
    let mut x = theta.to_vec();
    let mut h = Matrix::zeros(d, d);
    let f0 = f(theta);
    for i in 0..d {
        x[i] = theta[i] + step;
        let fp = f(&x);
        x[i] = theta[i] - step;
        let fm = f(&x);
        x[i] = theta[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| {
                x[i] = theta[i] + si * step;
                x[j] = theta[j] + sj * step;
                let v = f(&x);
                x[i] = theta[i];
                x[j] = theta[j];
                v
            };
            let v =
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(SymmetricMatrix::symmetrize(&h))
}

fn fd_hessian_of_gradient(g: impl Fn(&[f64]) -> Vec<f64>, theta: &[f64], step: f64) -> SymmetricMatrix {
    let d = theta.len();
    let mut x = theta.to_vec();
    let mut h = Matrix::zeros(d, d);
    for k in 0..d {
        x[k] = theta[k] + step;
        let gp = g(&x);
        x[k] = theta[k] - step;
        let gm = g(&x);
        x[k] = theta[k];
        for i in 0..d {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    SymmetricMatrix::symmetrize(&h)
}

/// Finite-difference estimate of one part's gradient or Hessian.
///
/// Gradients difference the loss values; Hessians difference the
/// closed-form gradients.
pub fn finite_diff_oracle<M: SplitLoss + ?Sized>(
    model: &M,
    part: Part,
    theta: &[f64],
    order: FdOrder,
    step: f64,
) -> Result<FdEstimate> {
    check_theta(model.dim(), theta)?;
    check_step(step)?;
    Ok(match order {
        FdOrder::Gradient => FdEstimate::Gradient(fd_gradient(|t| model.value(part, t), theta, step)?),
        FdOrder::Hessian => FdEstimate::Hessian(fd_hessian_of_gradient(|t| model.gradient(part, t), theta, step)),
    })
}

/// Norm-wise relative error `‖a − b‖ / ‖b‖`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = crate::linalg::distance(a, b);
    let base = crate::linalg::norm(b);
    if diff == 0.0 {
        0.0
    } else {
        diff / base.max(f64::MIN_POSITIVE)
    }
}

use serde::{Deserialize, Serialize};

use super::{Part, SplitLoss};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Scalar toy loss: `L1(x) = x²/2`, `L0(x) = δ (x − c)²/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyScalarLoss {
    pub delta: f64,
    pub c: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(invalid("delta_imb", format!("must be positive, got {delta}")));
    }
    Ok(())
}

fn check_center(c: f64) -> Result<()> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(invalid("c", format!("must be finite and nonnegative, got {c}")));
    }
    Ok(())
}

/// Accepts `δ > 0` and `c ≥ 0`; `c = 0` is the degenerate case where the
/// minority shares the majority minimizer.
pub fn make_toy(delta: f64, c: f64) -> Result<ToyScalarLoss> {
    check_delta(delta)?;
    check_center(c)?;
    Ok(ToyScalarLoss { delta, c })
}

impl ToyScalarLoss {
    /// Representative minimizer `δc/(1+δ)`.
    pub fn representative(&self) -> f64 {
        self.delta * self.c / (1.0 + self.delta)
    }

    /// Stereotypical minimizer of `L1`.
    pub fn stereotype(&self) -> f64 {
        0.0
    }

    /// Closed-form gradient flow of one part started at `x0`.
    pub fn exact_flow(&self, part: Part, x0: f64, t: f64) -> f64 {
        match part {
            Part::Total => {
                let xh = self.representative();
                xh + (x0 - xh) * (-(1.0 + self.delta) * t).exp()
            }
            Part::Majority => x0 * (-t).exp(),
            Part::Minority => self.c + (x0 - self.c) * (-self.delta * t).exp(),
        }
    }
}

impl SplitLoss for ToyScalarLoss {
    fn dim(&self) -> usize {
        1
    }

    fn split_values(&self, theta: &[f64]) -> (f64, f64) {
        let x = theta[0];
        (0.5 * x * x, 0.5 * self.delta * (x - self.c) * (x - self.c))
    }

    fn split_gradients(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = theta[0];
        (vec![x], vec![self.delta * (x - self.c)])
    }

    fn split_hessians(&self, _theta: &[f64]) -> Option<(Matrix, Matrix)> {
        Some((Matrix::from_diag(&[1.0]), Matrix::from_diag(&[self.delta])))
    }

    fn constant_hessian(&self) -> bool {
        true
    }
}

/// Double well with a quadratic minority term:
/// `L1(x) = (x² − 1)²/4`, `L0(x) = δ (x − c)²/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellLoss {
    pub delta: f64,
    pub c: f64,
}

pub fn make_double_well(delta: f64, c: f64) -> Result<DoubleWellLoss> {
    check_delta(delta)?;
    if !c.is_finite() {
        return Err(invalid("c", "must be finite"));
    }
    Ok(DoubleWellLoss { delta, c })
}

impl DoubleWellLoss {
    /// Critical points of `L1`: `-1, 0, 1`.
    pub fn majority_critical_points(&self) -> [f64; 3] {
        [-1.0, 0.0, 1.0]
    }
}

impl SplitLoss for DoubleWellLoss {
    fn dim(&self) -> usize {
        1
    }

    fn split_values(&self, theta: &[f64]) -> (f64, f64) {
        let x = theta[0];
        let w = x * x - 1.0;
        (0.25 * w * w, 0.5 * self.delta * (x - self.c) * (x - self.c))
    }

    fn split_gradients(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = theta[0];
        (vec![x * x * x - x], vec![self.delta * (x - self.c)])
    }

    fn split_hessians(&self, theta: &[f64]) -> Option<(Matrix, Matrix)> {
        let x = theta[0];
        Some((
            Matrix::from_diag(&[3.0 * x * x - 1.0]),
            Matrix::from_diag(&[self.delta]),
        ))
    }

    /// `|6x|` is the derivative of `3x² − 1`; its sup over the box bounds
    /// the Lipschitz constant of `∇²L1`, and `∇²L0` is constant.
    fn exact_hessian_lipschitz(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        Some(6.0 * lower[0].abs().max(upper[0].abs()))
    }
}

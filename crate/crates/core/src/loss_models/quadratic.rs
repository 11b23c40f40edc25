use serde::Serialize;

use super::{GroupedDataset, Part, SplitLoss};
use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, dot, sub, Matrix};
use crate::spectral::{rho_min, SymmetricMatrix};

/// Ridge-regularized least squares on grouped data:
///
/// ```text
/// L1(θ) = (1/2n) Σ_{A=1} (x·θ − y)² + γ (n1/n) ‖θ − ε‖²
/// L0(θ) = (1/2n) Σ_{A=0} (x·θ − y)² + γ (n0/n) ‖θ − ε‖²
/// ```
///
/// Covariances are uncentered second moments, `S_j = X_jᵀX_j / n_j`, and the
/// cross terms are `b_j = X_jᵀY_j / n_j`. Hessians are constant:
/// `∇²L_j = (n_j/n)(S_j + 2γI)`.
#[derive(Clone, Debug, Serialize)]
pub struct QuadraticSplitLoss {
    dataset: GroupedDataset,
    gamma: f64,
    center: Vec<f64>,
    s: SymmetricMatrix,
    s0: SymmetricMatrix,
    s1: SymmetricMatrix,
    b: Vec<f64>,
    b0: Vec<f64>,
    b1: Vec<f64>,
}

fn moments(ds: &GroupedDataset, rows: &[usize]) -> (SymmetricMatrix, Vec<f64>) {
    let d = ds.dim();
    let mut s = Matrix::zeros(d, d);
    let mut b = vec![0.0; d];
    for &i in rows {
        let x = ds.row(i);
        let y = ds.targets()[i];
        for p in 0..d {
            b[p] += x[p] * y;
            for q in p..d {
                s[(p, q)] += x[p] * x[q];
            }
        }
    }
    let m = rows.len() as f64;
    for p in 0..d {
        b[p] /= m;
        for q in p..d {
            let v = s[(p, q)] / m;
            s[(p, q)] = v;
            s[(q, p)] = v;
        }
    }
    (SymmetricMatrix::symmetrize(&s), b)
}

/// Builds the grouped least-squares split loss with ridge `γ ‖θ − ε_c‖²`
/// apportioned to the groups by their fractions of `n`.
pub fn make_quadratic(dataset: GroupedDataset, gamma: f64, center: Vec<f64>) -> Result<QuadraticSplitLoss> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be finite and nonnegative, got {gamma}")));
    }
    if center.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: center.len(),
        });
    }
    if !all_finite(&center) {
        return Err(Error::NonFinite("ridge center"));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (s, b) = moments(&dataset, &all);
    let (s0, b0) = moments(&dataset, &dataset.indices(0));
    let (s1, b1) = moments(&dataset, &dataset.indices(1));
    Ok(QuadraticSplitLoss {
        dataset,
        gamma,
        center,
        s,
        s0,
        s1,
        b,
        b0,
        b1,
    })
}

impl QuadraticSplitLoss {
    pub fn dataset(&self) -> &GroupedDataset {
        &self.dataset
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn n(&self) -> usize {
        self.dataset.len()
    }

    /// `1`, `n1/n` or `n0/n`.
    pub fn weight(&self, part: Part) -> f64 {
        let n = self.n() as f64;
        match part {
            Part::Total => 1.0,
            Part::Majority => self.dataset.n1() as f64 / n,
            Part::Minority => self.dataset.n0() as f64 / n,
        }
    }

    /// Raw covariance `S`, `S1` or `S0`.
    pub fn covariance(&self, part: Part) -> &SymmetricMatrix {
        match part {
            Part::Total => &self.s,
            Part::Majority => &self.s1,
            Part::Minority => &self.s0,
        }
    }

    /// `XᵀY/n` restricted to one group and divided by that group's size.
    pub fn cross_term(&self, part: Part) -> &[f64] {
        match part {
            Part::Total => &self.b,
            Part::Majority => &self.b1,
            Part::Minority => &self.b0,
        }
    }

    /// `S_j + 2γI`, the covariance seen by the regularized loss.
    pub fn effective_covariance(&self, part: Part) -> SymmetricMatrix {
        self.covariance(part).shifted(2.0 * self.gamma)
    }

    /// The constant Hessian `(n_j/n)(S_j + 2γI)`.
    pub fn hessian_matrix(&self, part: Part) -> SymmetricMatrix {
        self.effective_covariance(part).scaled(self.weight(part))
    }

    /// Unique minimizer of one part: `(S_j + 2γI) θ = b_j + 2γε`.
    pub fn minimizer(&self, part: Part) -> Result<Vec<f64>> {
        let a = self.effective_covariance(part);
        let rhs: Vec<f64> = self
            .cross_term(part)
            .iter()
            .zip(&self.center)
            .map(|(b, e)| b + 2.0 * self.gamma * e)
            .collect();
        let name = match part {
            Part::Total => "full data",
            Part::Majority => "group 1 (majority)",
            Part::Minority => "group 0 (minority)",
        };
        let scale = crate::spectral::rho_max(&a)?.max(f64::MIN_POSITIVE);
        let floor = rho_min(&a)?;
        if floor <= 1e-12 * scale {
            return Err(Error::Singular {
                context: format!("covariance of {name}"),
                rho_min: floor,
            });
        }
        a.matrix().solve(&rhs).map_err(|_| Error::Singular {
            context: format!("covariance of {name}"),
            rho_min: floor,
        })
    }

    /// Dense evaluation straight from the definition of the total loss,
    /// `(1/2n)‖Xθ − Y‖² + γ‖θ − ε‖²`.
    pub fn total_by_definition(&self, theta: &[f64]) -> f64 {
        let n = self.n() as f64;
        let rss: f64 = (0..self.n())
            .map(|i| {
                let r = dot(self.dataset.row(i), theta) - self.dataset.targets()[i];
                r * r
            })
            .sum();
        let dev = sub(theta, &self.center);
        rss / (2.0 * n) + self.gamma * dot(&dev, &dev)
    }

    fn part_gradient(&self, part: Part, theta: &[f64]) -> Vec<f64> {
        let w = self.weight(part);
        let st = self.covariance(part).matvec(theta);
        st.iter()
            .zip(self.cross_term(part))
            .zip(theta.iter().zip(&self.center))
            .map(|((s, b), (t, e))| w * ((s - b) + 2.0 * self.gamma * (t - e)))
            .collect()
    }
}

impl SplitLoss for QuadraticSplitLoss {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn split_values(&self, theta: &[f64]) -> (f64, f64) {
        let n = self.n() as f64;
        let mut rss = [0.0f64; 2];
        for i in 0..self.n() {
            let r = dot(self.dataset.row(i), theta) - self.dataset.targets()[i];
            rss[self.dataset.groups()[i] as usize] += r * r;
        }
        let dev = sub(theta, &self.center);
        let ridge = self.gamma * dot(&dev, &dev);
        (
            rss[1] / (2.0 * n) + self.weight(Part::Majority) * ridge,
            rss[0] / (2.0 * n) + self.weight(Part::Minority) * ridge,
        )
    }

    fn split_gradients(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.part_gradient(Part::Majority, theta),
            self.part_gradient(Part::Minority, theta),
        )
    }

    fn split_hessians(&self, _theta: &[f64]) -> Option<(Matrix, Matrix)> {
        Some((
            self.hessian_matrix(Part::Majority).into_matrix(),
            self.hessian_matrix(Part::Minority).into_matrix(),
        ))
    }

    fn constant_hessian(&self) -> bool {
        true
    }
}

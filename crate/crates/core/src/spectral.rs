//! Dense symmetric eigen-analysis: cyclic Jacobi decomposition, extreme
//! singular values, Morse index counting and the matrix exponential used by
//! the exact linear flows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

const MAX_DIM: usize = 512;
const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// A square matrix that is exactly symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymmetricMatrix(Matrix);

impl SymmetricMatrix {
    /// Accepts `m` when its largest asymmetry is within `1e-10 * max(1, max|m_ij|)`
    /// and symmetrizes it.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let scale = m.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let asym = m.max_asymmetry();
        if asym > SYMMETRY_TOL * scale {
            return Err(invalid("matrix", format!("not symmetric (max asymmetry {asym:.3e})")));
        }
        Ok(Self::symmetrize(&m))
    }

    /// Returns `(m + m^T) / 2` without checking.
    pub fn symmetrize(m: &Matrix) -> Self {
        let n = m.rows();
        let mut s = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Self(s)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.scaled(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.sub(&other.0))
    }

    pub fn shifted(&self, s: f64) -> Self {
        Self(self.0.shifted(s))
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.0.matvec(v)
    }

    /// `Q^T A Q` for an orthogonal `Q`.
    pub fn congruence(&self, q: &Matrix) -> Self {
        Self::symmetrize(&q.transpose().matmul(&self.0).matmul(q))
    }
}

impl TryFrom<Matrix> for SymmetricMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<SymmetricMatrix> for Matrix {
    fn from(s: SymmetricMatrix) -> Matrix {
        s.0
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// `V f(Λ) V^T`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors[(i, k)] * w;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        SymmetricMatrix::symmetrize(&out)
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn eigen_decompose(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n > MAX_DIM {
        return Err(invalid("matrix", format!("dimension {n} exceeds {MAX_DIM}")));
    }
    if !a.matrix().is_finite() {
        return Err(Error::NonFinite("eigen_decompose input"));
    }
    let mut m = a.matrix().clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius();
    if total == 0.0 || n <= 1 {
        return Ok(sorted(m, v));
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(sorted(m, v))
}

fn sorted(m: Matrix, v: Matrix) -> EigenDecomposition {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new)] = v[(r, old)];
        }
    }
    EigenDecomposition { values, vectors }
}

pub fn eigenvalues(a: &SymmetricMatrix) -> Result<Vec<f64>> {
    Ok(eigen_decompose(a)?.values)
}

/// Smallest and largest singular value of a symmetric matrix, i.e. the
/// extreme absolute eigenvalues.
pub fn rho_extremes(a: &SymmetricMatrix) -> Result<(f64, f64)> {
    let vals = eigenvalues(a)?;
    Ok(abs_extremes(&vals))
}

pub(crate) fn abs_extremes(vals: &[f64]) -> (f64, f64) {
    vals.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    })
}

pub fn rho_min(a: &SymmetricMatrix) -> Result<f64> {
    Ok(rho_extremes(a)?.0)
}

pub fn rho_max(a: &SymmetricMatrix) -> Result<f64> {
    Ok(rho_extremes(a)?.1)
}

/// Extreme singular values of a general square matrix through `A^T A`.
pub fn singular_extremes(a: &Matrix) -> Result<(f64, f64)> {
    let ata = SymmetricMatrix::symmetrize(&a.transpose().matmul(a));
    let vals = eigenvalues(&ata)?;
    let lo = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let hi = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    Ok((lo, hi))
}

/// Counts of strictly negative and numerically zero eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseIndex {
    pub negatives: usize,
    pub zeros: usize,
}

impl MorseIndex {
    pub fn is_degenerate(&self) -> bool {
        self.zeros > 0
    }
}

/// Default zero threshold: `1e-8 * rho_max`.
pub fn default_zero_tol(vals: &[f64]) -> f64 {
    let (_, hi) = abs_extremes(vals);
    (1e-8 * hi).max(f64::MIN_POSITIVE)
}

pub fn morse_index_of(vals: &[f64], zero_tol: f64) -> MorseIndex {
    MorseIndex {
        negatives: vals.iter().filter(|&&v| v < -zero_tol).count(),
        zeros: vals.iter().filter(|&&v| v.abs() <= zero_tol).count(),
    }
}

/// Morse index with an explicit threshold, or the default `1e-8 * rho_max`.
pub fn morse_index(h: &SymmetricMatrix, zero_tol: Option<f64>) -> Result<MorseIndex> {
    let vals = eigenvalues(h)?;
    let tol = match zero_tol {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(invalid("zero_tol", format!("must be positive, got {t}"))),
        None => default_zero_tol(&vals),
    };
    Ok(morse_index_of(&vals, tol))
}

/// `exp(t A)` through the eigen-decomposition.
pub fn matrix_exp_scaled(a: &SymmetricMatrix, t: f64) -> Result<SymmetricMatrix> {
    if !t.is_finite() {
        return Err(Error::NonFinite("matrix_exp_scaled time"));
    }
    if t == 0.0 {
        return Ok(SymmetricMatrix::identity(a.dim()));
    }
    let eig = eigen_decompose(a)?;
    let worst = eig.values.iter().map(|l| t * l).fold(f64::NEG_INFINITY, f64::max);
    if worst > 700.0 {
        return Err(Error::ExpOverflow(worst));
    }
    Ok(eig.reconstruct_with(|l| (t * l).exp()))
}

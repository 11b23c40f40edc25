use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GroupedDataset, SplitLoss};
use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

/// Layer widths of a one-hidden-layer tanh network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpArchitecture {
    /// Parameters are laid out as `W1 (hidden × input)`, `b1`, `W2
    /// (classes × hidden)`, `b2`, each row-major.
    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.classes * self.hidden + self.classes
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }
}

/// Softmax cross-entropy of a small tanh MLP on a grouped classification
/// dataset. Targets are class indices stored as floats.
///
/// `L_j = (1/n) Σ_{A=j} ce_i + γ (n_j/n) ‖θ‖²`.
#[derive(Clone, Debug)]
pub struct MlpClassifierLoss {
    arch: MlpArchitecture,
    dataset: GroupedDataset,
    labels: Vec<usize>,
    gamma: f64,
}

/// Weight initialization variance over fan-in.
pub const KAIMING_GAIN: f64 = 2.0;

struct Workspace {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dz2: Vec<f64>,
    dz1: Vec<f64>,
}

impl MlpClassifierLoss {
    pub fn new(arch: MlpArchitecture, dataset: GroupedDataset, gamma: f64) -> Result<Self> {
        if arch.input == 0 || arch.hidden == 0 || arch.classes < 2 {
            return Err(invalid("architecture", "need input >= 1, hidden >= 1 and classes >= 2"));
        }
        if arch.input != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: arch.input,
                got: dataset.dim(),
            });
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid("gamma", format!("must be nonnegative, got {gamma}")));
        }
        let labels = dataset
            .targets()
            .iter()
            .map(|&y| {
                if y >= 0.0 && y.fract() == 0.0 && (y as usize) < arch.classes {
                    Ok(y as usize)
                } else {
                    Err(Error::InvalidDataset(format!(
                        "target {y} is not a class index below {}",
                        arch.classes
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            arch,
            dataset,
            labels,
            gamma,
        })
    }

    pub fn architecture(&self) -> MlpArchitecture {
        self.arch
    }

    pub fn dataset(&self) -> &GroupedDataset {
        &self.dataset
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Kaiming-style initialization: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let a = self.arch;
        let (b1, w2, b2) = a.offsets();
        let mut theta = vec![0.0; a.num_params()];
        let n1 = Normal::new(0.0, (KAIMING_GAIN / a.input as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (KAIMING_GAIN / a.hidden as f64).sqrt()).expect("valid std");
        for v in &mut theta[..b1] {
            *v = n1.sample(rng);
        }
        for v in &mut theta[w2..b2] {
            *v = n2.sample(rng);
        }
        theta
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            hidden: vec![0.0; self.arch.hidden],
            logits: vec![0.0; self.arch.classes],
            dz2: vec![0.0; self.arch.classes],
            dz1: vec![0.0; self.arch.hidden],
        }
    }

    fn forward(&self, theta: &[f64], x: &[f64], ws: &mut Workspace) {
        let a = self.arch;
        let (b1, w2, b2) = a.offsets();
        for h in 0..a.hidden {
            let w = &theta[h * a.input..(h + 1) * a.input];
            ws.hidden[h] = (dot(w, x) + theta[b1 + h]).tanh();
        }
        for k in 0..a.classes {
            let w = &theta[w2 + k * a.hidden..w2 + (k + 1) * a.hidden];
            ws.logits[k] = dot(w, &ws.hidden) + theta[b2 + k];
        }
    }

    /// Class scores for one input.
    pub fn logits(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(theta, x, &mut ws);
        ws.logits
    }

    /// Argmax class, ties going to the lowest index.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        let z = self.logits(theta, x);
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }

    /// Cross-entropy of sample `i`, optionally accumulating `scale` times
    /// its gradient into `grad`.
    fn sample(&self, theta: &[f64], i: usize, ws: &mut Workspace, grad: Option<(&mut [f64], f64)>) -> f64 {
        let a = self.arch;
        let x = self.dataset.row(i);
        let y = self.labels[i];
        self.forward(theta, x, ws);
        let zmax = ws.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = ws.logits.iter().map(|z| (z - zmax).exp()).sum();
        let lse = zmax + sum.ln();
        let loss = lse - ws.logits[y];
        if let Some((g, scale)) = grad {
            let (b1, w2, b2) = a.offsets();
            for k in 0..a.classes {
                let p = (ws.logits[k] - lse).exp();
                ws.dz2[k] = scale * (p - if k == y { 1.0 } else { 0.0 });
            }
            for h in 0..a.hidden {
                let mut da = 0.0;
                for k in 0..a.classes {
                    da += theta[w2 + k * a.hidden + h] * ws.dz2[k];
                }
                ws.dz1[h] = da * (1.0 - ws.hidden[h] * ws.hidden[h]);
            }
            for k in 0..a.classes {
                let dz = ws.dz2[k];
                g[b2 + k] += dz;
                let row = &mut g[w2 + k * a.hidden..w2 + (k + 1) * a.hidden];
                for (gv, hv) in row.iter_mut().zip(&ws.hidden) {
                    *gv += dz * hv;
                }
            }
            for h in 0..a.hidden {
                let dz = ws.dz1[h];
                g[b1 + h] += dz;
                let row = &mut g[h * a.input..(h + 1) * a.input];
                for (gv, xv) in row.iter_mut().zip(x) {
                    *gv += dz * xv;
                }
            }
        }
        loss
    }

    fn group_weight(&self, group: u8) -> f64 {
        let n = self.dataset.len() as f64;
        match group {
            0 => self.dataset.n0() as f64 / n,
            _ => self.dataset.n1() as f64 / n,
        }
    }

    /// Gradient of the mean cross-entropy over `batch` plus the full ridge
    /// gradient `2γθ`; an unbiased estimate of `∇L` for uniform batches.
    pub fn batch_gradient(&self, theta: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * self.gamma * t).collect();
        if batch.is_empty() {
            return g;
        }
        let mut ws = self.workspace();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            self.sample(theta, i, &mut ws, Some((&mut g, scale)));
        }
        g
    }

    /// `(Acc, Acc0, Acc1)` on an arbitrary dataset with the same input width.
    pub fn accuracy_on(&self, theta: &[f64], data: &GroupedDataset) -> (f64, f64, f64) {
        let mut correct = [0usize; 2];
        for i in 0..data.len() {
            let y = data.targets()[i];
            if self.predict(theta, data.row(i)) as f64 == y {
                correct[data.groups()[i] as usize] += 1;
            }
        }
        let acc0 = correct[0] as f64 / data.n0() as f64;
        let acc1 = correct[1] as f64 / data.n1() as f64;
        let n = data.len() as f64;
        let acc = (data.n0() as f64 / n) * acc0 + (data.n1() as f64 / n) * acc1;
        (acc, acc0, acc1)
    }
}

impl SplitLoss for MlpClassifierLoss {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn split_values(&self, theta: &[f64]) -> (f64, f64) {
        let mut ws = self.workspace();
        let mut sums = [0.0f64; 2];
        for i in 0..self.dataset.len() {
            sums[self.dataset.groups()[i] as usize] += self.sample(theta, i, &mut ws, None);
        }
        let n = self.dataset.len() as f64;
        let ridge = self.gamma * dot(theta, theta);
        (
            sums[1] / n + self.group_weight(1) * ridge,
            sums[0] / n + self.group_weight(0) * ridge,
        )
    }

    fn split_gradients(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dataset.len() as f64;
        let mut ws = self.workspace();
        let mut grads = [
            theta
                .iter()
                .map(|t| 2.0 * self.gamma * self.group_weight(0) * t)
                .collect::<Vec<_>>(),
            theta
                .iter()
                .map(|t| 2.0 * self.gamma * self.group_weight(1) * t)
                .collect::<Vec<_>>(),
        ];
        for i in 0..self.dataset.len() {
            let g = self.dataset.groups()[i] as usize;
            self.sample(theta, i, &mut ws, Some((&mut grads[g], 1.0 / n)));
        }
        let [g0, g1] = grads;
        (g1, g0)
    }
}

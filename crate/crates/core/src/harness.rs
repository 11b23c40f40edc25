//! Synthetic imbalanced datasets, plain GD/SGD training with per-group
//! metrics, catch-up overcost, and the stereotype-then-debias protocol.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::critical_points::RegionConstants;
use crate::error::{invalid, Error, Result};
use crate::flow::{integrate_flow, FlowOptions, FlowStatus, StoppingRule};
use crate::linalg::{all_finite, distance, dot, norm, Matrix};
use crate::loss_models::{GroupedDataset, MlpClassifierLoss, Part, QuadraticSplitLoss, SplitLoss};
use crate::rng::{self, streams};
use crate::spectral::{eigen_decompose, rho_max, SymmetricMatrix};

/// Loss value beyond which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

pub const DEFAULT_KAPPAS: [f64; 2] = [0.90, 0.99];

fn default_separation() -> f64 {
    4.0
}

fn default_std() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

/// Class `minority_class` keeps `round(ζ · reference)` samples, the other
/// classes keep `reference` each and form the majority group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub dim: usize,
    pub classes: usize,
    pub reference: usize,
    pub imbalance: f64,
    /// Scale of the default means: `separation · e_k` when `dim ≥ classes`,
    /// otherwise evenly spaced on a circle of this radius in the first two
    /// coordinates.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_std")]
    pub std: f64,
    #[serde(default)]
    pub means: Option<Vec<Vec<f64>>>,
    /// One covariance per class; overrides `std`.
    #[serde(default)]
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub minority_class: usize,
}

/// `y = x·β_A + noise` with standard normal features; the minority
/// features are multiplied by `minority_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub dim: usize,
    pub majority_size: usize,
    /// Defaults to `majority_size`.
    #[serde(default)]
    pub reference: Option<usize>,
    pub imbalance: f64,
    pub coefficients_majority: Vec<f64>,
    pub coefficients_minority: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_one")]
    pub minority_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyEmbeddingSpec {
    pub majority_size: usize,
    pub imbalance: f64,
    #[serde(default)]
    pub reference: Option<usize>,
    #[serde(default = "default_one")]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    GaussianBlobs(BlobSpec),
    LinearRegressionSynthetic(RegressionSpec),
    ToyEmbedding(ToyEmbeddingSpec),
}

/// `round(ζ · reference)`, required to be at least one.
pub fn minority_size(imbalance: f64, reference: usize) -> Result<usize> {
    if !(imbalance > 0.0 && imbalance <= 1.0) {
        return Err(invalid("imbalance", format!("must lie in (0, 1], got {imbalance}")));
    }
    let n0 = (imbalance * reference as f64).round() as usize;
    if n0 == 0 {
        return Err(invalid(
            "imbalance",
            format!("ζ = {imbalance} with reference {reference} leaves no minority sample"),
        ));
    }
    Ok(n0)
}

/// Square root factor `V diag(√λ)` of a positive semidefinite matrix.
fn psd_factor(cov: &[Vec<f64>], class: usize) -> Result<Matrix> {
    let m = SymmetricMatrix::new(Matrix::from_rows(cov)?)
        .map_err(|e| invalid("covariances", format!("class {class}: {e}")))?;
    let eig = eigen_decompose(&m)?;
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if eig.values[0] < -1e-12 * scale {
        return Err(invalid(
            "covariances",
            format!(
                "class {class} covariance is not positive semidefinite (eigenvalue {})",
                eig.values[0]
            ),
        ));
    }
    let d = m.dim();
    let mut f = eig.vectors.clone();
    for k in 0..d {
        let s = eig.values[k].max(0.0).sqrt();
        for i in 0..d {
            f[(i, k)] *= s;
        }
    }
    Ok(f)
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn blobs(spec: &BlobSpec, seed: u64) -> Result<GroupedDataset> {
    let (d, c) = (spec.dim, spec.classes);
    if d == 0 || c < 2 {
        return Err(invalid("dataset", "blobs need dim >= 1 and classes >= 2"));
    }
    if spec.minority_class >= c {
        return Err(invalid("minority_class", format!("must be below classes = {c}")));
    }
    if spec.reference == 0 {
        return Err(invalid("reference", "must be positive"));
    }
    if !(spec.std.is_finite() && spec.std > 0.0) {
        return Err(invalid("std", "must be positive"));
    }
    let means = match &spec.means {
        Some(m) => {
            if m.len() != c || m.iter().any(|v| v.len() != d || !all_finite(v)) {
                return Err(invalid("means", format!("need {c} finite means of length {d}")));
            }
            m.clone()
        }
        None if d >= c => (0..c)
            .map(|k| {
                let mut v = vec![0.0; d];
                v[k] = spec.separation;
                v
            })
            .collect(),
        None => (0..c)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / c as f64;
                let mut v = vec![0.0; d];
                v[0] = spec.separation * angle.cos();
                if d > 1 {
                    v[1] = spec.separation * angle.sin();
                }
                v
            })
            .collect(),
    };
    let factors = match &spec.covariances {
        Some(cs) => {
            if cs.len() != c {
                return Err(invalid("covariances", format!("need {c} matrices")));
            }
            cs.iter()
                .enumerate()
                .map(|(k, m)| {
                    if m.len() != d || m.iter().any(|r| r.len() != d) {
                        return Err(invalid("covariances", format!("class {k} must be {d}x{d}")));
                    }
                    psd_factor(m, k).map(Some)
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![None; c],
    };
    let n0 = minority_size(spec.imbalance, spec.reference)?;
    let mut rng = rng::stream(seed, streams::DATASET);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut groups = Vec::new();
    for k in 0..c {
        let count = if k == spec.minority_class { n0 } else { spec.reference };
        for _ in 0..count {
            let z = gaussian(&mut rng, d);
            let noise = match &factors[k] {
                Some(f) => f.matvec(&z),
                None => z.iter().map(|v| spec.std * v).collect(),
            };
            rows.push(means[k].iter().zip(&noise).map(|(m, e)| m + e).collect::<Vec<_>>());
            targets.push(k as f64);
            groups.push(u8::from(k != spec.minority_class));
        }
    }
    GroupedDataset::new(Matrix::from_rows(&rows)?, targets, groups)
}

fn regression(spec: &RegressionSpec, seed: u64) -> Result<GroupedDataset> {
    let d = spec.dim;
    if d == 0 || spec.majority_size == 0 {
        return Err(invalid("dataset", "regression needs dim >= 1 and majority_size >= 1"));
    }
    if spec.coefficients_majority.len() != d || spec.coefficients_minority.len() != d {
        return Err(invalid("coefficients", format!("need {d} coefficients per group")));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(invalid("noise", "must be nonnegative"));
    }
    let n0 = minority_size(spec.imbalance, spec.reference.unwrap_or(spec.majority_size))?;
    let mut rng = rng::stream(seed, streams::DATASET);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut groups = Vec::new();
    for (group, count, beta, scale) in [
        (1u8, spec.majority_size, &spec.coefficients_majority, 1.0),
        (0u8, n0, &spec.coefficients_minority, spec.minority_scale),
    ] {
        for _ in 0..count {
            let x: Vec<f64> = gaussian(&mut rng, d).into_iter().map(|v| v * scale).collect();
            let e: f64 = StandardNormal.sample(&mut rng);
            targets.push(dot(&x, beta) + spec.noise * e);
            rows.push(x);
            groups.push(group);
        }
    }
    GroupedDataset::new(Matrix::from_rows(&rows)?, targets, groups)
}

/// Deterministic for a given `(spec, seed)`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<GroupedDataset> {
    match spec {
        DatasetSpec::GaussianBlobs(s) => blobs(s, seed),
        DatasetSpec::LinearRegressionSynthetic(s) => regression(s, seed),
        DatasetSpec::ToyEmbedding(s) => {
            let n0 = minority_size(s.imbalance, s.reference.unwrap_or(s.majority_size))?;
            GroupedDataset::toy_embedding(s.majority_size, n0, s.c)
        }
    }
}

/// A split loss built from per-sample terms, trainable by mini-batches.
pub trait Trainable: SplitLoss {
    fn dataset(&self) -> &GroupedDataset;

    /// Unbiased estimate of `∇L` from the samples in `batch`.
    fn batch_gradient(&self, theta: &[f64], batch: &[usize]) -> Vec<f64>;

    fn init_params(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;

    /// `(Acc, Acc0, Acc1)` for classifiers.
    fn accuracy(&self, _theta: &[f64]) -> Option<(f64, f64, f64)> {
        None
    }

    /// `2/λ_max(∇²L)` when the Hessian is constant.
    fn max_stable_lr(&self) -> Option<f64> {
        None
    }
}

impl Trainable for MlpClassifierLoss {
    fn dataset(&self) -> &GroupedDataset {
        MlpClassifierLoss::dataset(self)
    }

    fn batch_gradient(&self, theta: &[f64], batch: &[usize]) -> Vec<f64> {
        MlpClassifierLoss::batch_gradient(self, theta, batch)
    }

    fn init_params(&self, mut rng: &mut dyn rand::RngCore) -> Vec<f64> {
        MlpClassifierLoss::init_params(self, &mut rng)
    }

    fn accuracy(&self, theta: &[f64]) -> Option<(f64, f64, f64)> {
        Some(accuracy_metrics(self, theta, MlpClassifierLoss::dataset(self)))
    }
}

impl Trainable for QuadraticSplitLoss {
    fn dataset(&self) -> &GroupedDataset {
        QuadraticSplitLoss::dataset(self)
    }

    fn batch_gradient(&self, theta: &[f64], batch: &[usize]) -> Vec<f64> {
        let ds = QuadraticSplitLoss::dataset(self);
        let mut g: Vec<f64> = theta
            .iter()
            .zip(self.center())
            .map(|(t, e)| 2.0 * self.gamma() * (t - e))
            .collect();
        if batch.is_empty() {
            return g;
        }
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = ds.row(i);
            let r = dot(x, theta) - ds.targets()[i];
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += scale * r * xj;
            }
        }
        g
    }

    fn init_params(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        kaiming_normal(self.dim(), rng)
    }

    fn max_stable_lr(&self) -> Option<f64> {
        rho_max(&self.hessian_matrix(Part::Total)).ok().map(|m| 2.0 / m)
    }
}

/// `N(0, 2/d)` entries.
pub fn kaiming_normal(dim: usize, rng: &mut dyn rand::RngCore) -> Vec<f64> {
    let s = (2.0 / dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect()
}

/// Argmax predictions with ties to the lowest class index.
pub fn accuracy_metrics(model: &MlpClassifierLoss, theta: &[f64], dataset: &GroupedDataset) -> (f64, f64, f64) {
    model.accuracy_on(theta, dataset)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Gd { lr: f64 },
    Sgd { lr: f64, batch: usize, seed: u64 },
}

impl Optimizer {
    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Gd { lr } | Optimizer::Sgd { lr, .. } => lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_majority: f64,
    pub loss_minority: f64,
    /// `n L1 / n1`
    pub loss_majority_per_sample: f64,
    /// `n L0 / n0`
    pub loss_minority_per_sample: f64,
    pub acc: Option<f64>,
    pub acc0: Option<f64>,
    pub acc1: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub kappa: f64,
    /// First epoch with `Acc ≥ κ`.
    pub t_early: Option<usize>,
    /// First epoch with `Acc0 ≥ κ`.
    pub t_final: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainingStatus {
    Completed,
    Diverged { epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub optimizer: Optimizer,
    pub epochs: Vec<EpochRecord>,
    pub crossings: Vec<Crossing>,
    pub status: TrainingStatus,
    pub final_params: Vec<f64>,
}

fn epoch_record<M: Trainable + ?Sized>(model: &M, theta: &[f64], epoch: usize) -> EpochRecord {
    let (l1, l0) = model.split_values(theta);
    let ds = model.dataset();
    let n = ds.len() as f64;
    let acc = model.accuracy(theta);
    EpochRecord {
        epoch,
        loss: l1 + l0,
        loss_majority: l1,
        loss_minority: l0,
        loss_majority_per_sample: n * l1 / ds.n1() as f64,
        loss_minority_per_sample: n * l0 / ds.n0() as f64,
        acc: acc.map(|a| a.0),
        acc0: acc.map(|a| a.1),
        acc1: acc.map(|a| a.2),
    }
}

fn first_epoch(records: &[EpochRecord], kappa: f64, f: impl Fn(&EpochRecord) -> Option<f64>) -> Option<usize> {
    records
        .iter()
        .find(|r| f(r).is_some_and(|a| a >= kappa))
        .map(|r| r.epoch)
}

impl TrainingRecord {
    pub fn crossing(&self, kappa: f64) -> Crossing {
        Crossing {
            kappa,
            t_early: first_epoch(&self.epochs, kappa, |r| r.acc),
            t_final: first_epoch(&self.epochs, kappa, |r| r.acc0),
        }
    }

    /// Columns `epoch, L, L1, L0, L1_per_sample, L0_per_sample, acc, acc0, acc1`;
    /// accuracies are empty for regression models.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "epoch",
            "L",
            "L1",
            "L0",
            "L1_per_sample",
            "L0_per_sample",
            "acc",
            "acc0",
            "acc1",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.loss_majority.to_string(),
                r.loss_minority.to_string(),
                r.loss_majority_per_sample.to_string(),
                r.loss_minority_per_sample.to_string(),
                opt(r.acc),
                opt(r.acc0),
                opt(r.acc1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    /// End the run once `Acc0` has crossed every threshold.
    #[serde(default)]
    pub stop_when_crossed: bool,
}

fn default_kappas() -> Vec<f64> {
    DEFAULT_KAPPAS.to_vec()
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer, epochs: usize) -> Self {
        Self {
            optimizer,
            epochs,
            kappas: default_kappas(),
            stop_when_crossed: false,
        }
    }

    pub fn with_kappas(mut self, kappas: &[f64]) -> Self {
        self.kappas = kappas.to_vec();
        self
    }

    pub fn stop_when_crossed(mut self) -> Self {
        self.stop_when_crossed = true;
        self
    }
}

/// Runs up to `epochs` epochs from `theta0`, recording epoch 0 before any
/// update. GD takes one full-gradient step per epoch; SGD shuffles the
/// sample indices every epoch and steps once per batch.
pub fn train<M: Trainable + ?Sized>(model: &M, theta0: &[f64], config: &TrainConfig) -> Result<TrainingRecord> {
    let (optimizer, epochs, kappas) = (config.optimizer, config.epochs, &config.kappas);
    if theta0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta0.len(),
        });
    }
    let lr = optimizer.lr();
    if !(lr.is_finite() && lr > 0.0) {
        return Err(invalid("lr", format!("must be positive, got {lr}")));
    }
    if let (Optimizer::Gd { .. }, Some(limit)) = (optimizer, model.max_stable_lr()) {
        if lr >= limit {
            return Err(invalid(
                "lr",
                format!("{lr} is not below the stability limit 2/λ_max = {limit}"),
            ));
        }
    }
    if let Optimizer::Sgd { batch: 0, .. } = optimizer {
        return Err(invalid("batch", "must be positive"));
    }
    for &k in kappas {
        if !(0.0..=1.0).contains(&k) {
            return Err(invalid("kappa", format!("must lie in [0, 1], got {k}")));
        }
    }
    let n = model.dataset().len();
    let mut theta = theta0.to_vec();
    let mut records = vec![epoch_record(model, &theta, 0)];
    let mut status = TrainingStatus::Completed;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffler = match optimizer {
        Optimizer::Sgd { seed, .. } => Some(rng::stream(seed, streams::SHUFFLE)),
        Optimizer::Gd { .. } => None,
    };
    for epoch in 1..=epochs {
        match optimizer {
            Optimizer::Gd { .. } => {
                let g = model.gradient(Part::Total, &theta);
                theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= lr * gi);
            }
            Optimizer::Sgd { batch, .. } => {
                order.shuffle(shuffler.as_mut().expect("sgd has a shuffler"));
                for chunk in order.chunks(batch) {
                    let g = model.batch_gradient(&theta, chunk);
                    theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= lr * gi);
                }
            }
        }
        let rec = epoch_record(model, &theta, epoch);
        if !(rec.loss.is_finite() && rec.loss <= DIVERGENCE_LOSS) || !all_finite(&theta) {
            status = TrainingStatus::Diverged { epoch };
            break;
        }
        records.push(rec);
        if config.stop_when_crossed
            && kappas.iter().all(|&k| {
                first_epoch(&records, k, |r| r.acc0).is_some() && first_epoch(&records, k, |r| r.acc).is_some()
            })
        {
            break;
        }
    }
    let mut out = TrainingRecord {
        optimizer,
        epochs: records,
        crossings: Vec::new(),
        status,
        final_params: theta,
    };
    out.crossings = kappas.iter().map(|&k| out.crossing(k)).collect();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Overcost {
    Value {
        value: f64,
    },
    NotReached,
    /// `T_early = 0` with `T_final > 0`.
    Undefined,
}

impl Overcost {
    pub fn value(self) -> Option<f64> {
        match self {
            Overcost::Value { value } => Some(value),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvercostReport {
    pub kappa: f64,
    pub t_early: Option<usize>,
    pub t_final: Option<usize>,
    /// `T_final − T_early`; negative when the minority crosses first.
    pub t_debias: Option<i64>,
    pub overcost: Overcost,
}

/// `(T_final − T_early) / T_early` from the first crossings of `Acc` and
/// `Acc0` above `κ`.
pub fn overcost(record: &TrainingRecord, kappa: f64) -> Result<OvercostReport> {
    if record.epochs.is_empty() {
        return Err(invalid("record", "has no epochs"));
    }
    let c = record.crossing(kappa);
    let (t_debias, value) = match (c.t_early, c.t_final) {
        (Some(e), Some(f)) => {
            let diff = f as i64 - e as i64;
            let v = if diff == 0 {
                Overcost::Value { value: 0.0 }
            } else if e == 0 {
                Overcost::Undefined
            } else {
                Overcost::Value {
                    value: diff as f64 / e as f64,
                }
            };
            (Some(diff), v)
        }
        _ => (None, Overcost::NotReached),
    };
    Ok(OvercostReport {
        kappa,
        t_early: c.t_early,
        t_final: c.t_final,
        t_debias,
        overcost: value,
    })
}

impl Overcost {
    /// Ordering key: not-reached and undefined overcosts count as infinite.
    fn key(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

/// Median with not-reached and undefined entries ordered above every value;
/// a middle entry of that kind makes the median `NotReached`.
pub fn median_overcost(values: &[Overcost]) -> Overcost {
    if values.is_empty() {
        return Overcost::NotReached;
    }
    let mut keys: Vec<f64> = values.iter().map(|v| v.key()).collect();
    keys.sort_by(f64::total_cmp);
    let n = keys.len();
    let m = if n % 2 == 1 {
        keys[n / 2]
    } else {
        0.5 * (keys[n / 2 - 1] + keys[n / 2])
    };
    if m.is_finite() {
        Overcost::Value { value: m }
    } else {
        Overcost::NotReached
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRun {
    pub seed: u64,
    pub n0: usize,
    pub n1: usize,
    pub epochs_run: usize,
    /// One report per threshold of the training config.
    pub reports: Vec<OvercostReport>,
    #[serde(skip)]
    pub record: Option<TrainingRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub imbalance: f64,
    pub runs: Vec<TrendRun>,
    /// `(κ, median overcost)` for every threshold.
    pub medians: Vec<(f64, Overcost)>,
}

impl TrendPoint {
    pub fn median(&self, kappa: f64) -> Option<Overcost> {
        self.medians.iter().find(|m| m.0 == kappa).map(|m| m.1)
    }
}

/// Trains the classifier on blobs for every `(ζ, seed)` pair and reports the
/// median overcost per `ζ` and threshold. The seed drives the dataset, the
/// initialization and the SGD shuffles; runs execute in parallel.
pub fn overcost_trend(
    blobs: &BlobSpec,
    hidden: usize,
    gamma: f64,
    imbalances: &[f64],
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<Vec<TrendPoint>> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, u64)> = (0..imbalances.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<(usize, TrendRun)> = jobs
        .into_par_iter()
        .map(|(i, seed)| -> Result<(usize, TrendRun)> {
            let spec = BlobSpec {
                imbalance: imbalances[i],
                ..blobs.clone()
            };
            let ds = generate_dataset(&DatasetSpec::GaussianBlobs(spec), seed)?;
            let (n0, n1) = (ds.n0(), ds.n1());
            let arch = crate::loss_models::MlpArchitecture {
                input: blobs.dim,
                hidden,
                classes: blobs.classes,
            };
            let model = MlpClassifierLoss::new(arch, ds, gamma)?;
            let mut init_rng = rng::stream(seed, streams::INIT);
            let theta0 = Trainable::init_params(&model, &mut init_rng);
            let optimizer = match config.optimizer {
                Optimizer::Sgd { lr, batch, .. } => Optimizer::Sgd { lr, batch, seed },
                gd => gd,
            };
            let cfg = TrainConfig {
                optimizer,
                ..config.clone()
            };
            let rec = train(&model, &theta0, &cfg)?;
            let reports = cfg
                .kappas
                .iter()
                .map(|&k| overcost(&rec, k))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                i,
                TrendRun {
                    seed,
                    n0,
                    n1,
                    epochs_run: rec.epochs.len() - 1,
                    reports,
                    record: Some(rec),
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(imbalances
        .iter()
        .enumerate()
        .map(|(i, &imbalance)| {
            let mine: Vec<TrendRun> = runs.iter().filter(|r| r.0 == i).map(|r| r.1.clone()).collect();
            let medians = config
                .kappas
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let vals: Vec<Overcost> = mine.iter().map(|r| r.reports[j].overcost).collect();
                    (k, median_overcost(&vals))
                })
                .collect();
            TrendPoint {
                imbalance,
                runs: mine,
                medians,
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct DebiasOptions {
    pub step: f64,
    /// Gradient-norm tolerance for both flows.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for DebiasOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            tol: 1e-8,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebiasStatus {
    Converged,
    StereotypeNotConverged,
    RepresentativeNotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub status: DebiasStatus,
    pub theta_init: Vec<f64>,
    pub stereotype: Vec<f64>,
    pub representative: Vec<f64>,
    pub stereotype_steps: usize,
    pub representative_steps: usize,
    pub distance: f64,
    pub distance_inf: f64,
    /// `‖θ̂ − θ̂1‖ / ‖θ̂‖`, absent when `θ̂ = 0`.
    pub relative_distance: Option<f64>,
    /// First `k ≥ 1` with `‖θ_{k+1} − θ̂1‖ ≥ 0.99 ‖θ_k − θ̂1‖` along gradient
    /// descent on `L` from `θ̂1`.
    pub debias_steps: Option<usize>,
    /// First `k` with `‖θ_k − θ̂1‖ ≥ 0.99 ‖θ̂ − θ̂1‖`.
    pub debias_steps_99pct: Option<usize>,
    pub gap_bound: Option<f64>,
    pub within_gap_bound: Option<bool>,
}

fn flow_to_rest<L: SplitLoss + ?Sized>(
    model: &L,
    part: Part,
    start: &[f64],
    opts: &DebiasOptions,
) -> Result<(Vec<f64>, usize, bool)> {
    let fo = FlowOptions::euler(opts.step, opts.step * opts.max_steps as f64)
        .with_stop(StoppingRule::GradNorm(opts.tol))
        .with_stride(opts.max_steps.max(1));
    let tr = integrate_flow(model, part, start, &fo)?;
    let steps = (tr.final_time() / opts.step).round() as usize;
    Ok((tr.last().to_vec(), steps, tr.status == FlowStatus::Converged))
}

/// Flows `−∇L1` from `theta_init` to a stereotype, then `−∇L` from there to
/// a representative, and measures the gap and the debiasing step counts.
pub fn debias_protocol<L: SplitLoss + ?Sized>(
    model: &L,
    theta_init: &[f64],
    opts: &DebiasOptions,
    constants: Option<&RegionConstants>,
) -> Result<DebiasReport> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let (stereo, k1, ok1) = flow_to_rest(model, Part::Majority, theta_init, opts)?;
    let (rep, k, ok) = flow_to_rest(model, Part::Total, &stereo, opts)?;
    let status = match (ok1, ok) {
        (true, true) => DebiasStatus::Converged,
        (false, _) => DebiasStatus::StereotypeNotConverged,
        (true, false) => DebiasStatus::RepresentativeNotConverged,
    };
    let dist = distance(&rep, &stereo);
    let dist_inf = rep.iter().zip(&stereo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rep_norm = norm(&rep);

    let (mut debias_steps, mut steps_99) = (None, None);
    if dist > 0.0 {
        let mut theta = stereo.clone();
        let mut prev = 0.0;
        for step in 1..=k.max(1) {
            let g = model.gradient(Part::Total, &theta);
            theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= opts.step * gi);
            let cur = distance(&theta, &stereo);
            if debias_steps.is_none() && step >= 2 && cur >= 0.99 * prev {
                debias_steps = Some(step - 1);
            }
            if steps_99.is_none() && cur >= 0.99 * dist {
                steps_99 = Some(step);
            }
            if debias_steps.is_some() && steps_99.is_some() {
                break;
            }
            prev = cur;
        }
    } else {
        debias_steps = Some(0);
        steps_99 = Some(0);
    }
    let gap_bound = constants.filter(|c| c.certified()).map(|c| c.gap_bound());
    Ok(DebiasReport {
        status,
        theta_init: theta_init.to_vec(),
        stereotype: stereo,
        representative: rep,
        stereotype_steps: k1,
        representative_steps: k,
        distance: dist,
        distance_inf: dist_inf,
        relative_distance: (rep_norm > 0.0).then(|| dist / rep_norm),
        debias_steps,
        debias_steps_99pct: steps_99,
        gap_bound,
        within_gap_bound: gap_bound.map(|b| dist <= b),
    })
}

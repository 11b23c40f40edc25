#![allow(dead_code)]

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use stereogap::linalg::Matrix;
use stereogap::loss_models::{make_quadratic, GroupedDataset, QuadraticSplitLoss};
use stereogap::rng::{self, streams};

pub fn normal(rng: &mut impl RngCore) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut impl RngCore, d: usize) -> Vec<f64> {
    (0..d).map(|_| normal(rng)).collect()
}

/// Random grouped least-squares data. Minority rows are scaled by
/// `minority_scale` and follow their own coefficient vector.
pub fn regression_data(rng: &mut impl RngCore, d: usize, n1: usize, n0: usize, minority_scale: f64) -> GroupedDataset {
    let beta1 = normal_vec(rng, d);
    let beta0: Vec<f64> = beta1.iter().map(|b| b + normal(rng)).collect();
    let mut rows = Vec::with_capacity(n1 + n0);
    let mut targets = Vec::with_capacity(n1 + n0);
    let mut group = Vec::with_capacity(n1 + n0);
    for i in 0..n1 + n0 {
        let minority = i >= n1;
        let scale = if minority { minority_scale } else { 1.0 };
        let x: Vec<f64> = normal_vec(rng, d).into_iter().map(|v| v * scale).collect();
        let beta = if minority { &beta0 } else { &beta1 };
        let y = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + 0.1 * normal(rng);
        rows.push(x);
        targets.push(y);
        group.push(u8::from(!minority));
    }
    GroupedDataset::new(Matrix::from_rows(&rows).expect("rows"), targets, group).expect("dataset")
}

/// The `index`-th instance of a seeded family of ridge problems with a
/// faint minority group.
pub fn faint_minority_quadratic(seed: u64, index: u64, max_dim: usize) -> QuadraticSplitLoss {
    let mut r = rng::stream(seed, streams::INSTANCES + index);
    let d = r.random_range(1..=max_dim);
    let n1 = 40 + r.random_range(0..20);
    let n0 = r.random_range(1..=3);
    let data = regression_data(&mut r, d, n1, n0, 0.05);
    make_quadratic(data, 0.01, vec![0.0; d]).expect("quadratic")
}

/// A generic instance: both groups full rank, comparable scales.
pub fn generic_quadratic(seed: u64, index: u64, max_dim: usize, gamma: f64) -> QuadraticSplitLoss {
    let mut r = rng::stream(seed, streams::INSTANCES + index);
    let d = r.random_range(1..=max_dim);
    let n0 = d + r.random_range(1..6);
    let n1 = n0 + r.random_range(5..40);
    let scale = r.random_range(0.3..1.5);
    let data = regression_data(&mut r, d, n1, n0, scale);
    let center = if gamma > 0.0 {
        normal_vec(&mut r, d)
    } else {
        vec![0.0; d]
    };
    make_quadratic(data, gamma, center).expect("quadratic")
}

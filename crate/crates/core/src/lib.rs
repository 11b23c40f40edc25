//! Split majority/minority losses and the geometry of gradient descent on them.
//!
//! A loss `L = L1 + L0` is split into a majority part `L1` and a minority
//! part `L0`, both normalized by the total sample count. The crate provides
//!
//! * concrete loss families ([`loss_models`]): ridge-regularized grouped
//!   least squares, a scalar toy model, a double well and a small MLP
//!   classifier;
//! * a dense symmetric eigen-kernel ([`spectral`]);
//! * certified critical points and stereotype gaps ([`critical_points`]);
//! * gradient flows, training zones and their checks ([`flow`]);
//! * stereotype and catch-up timing ([`timing`]);
//! * a desk-scale imbalanced training harness ([`harness`]);
//! * a config-driven experiment runner ([`experiment`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical_points;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod harness;
pub mod linalg;
pub mod loss_models;
pub mod rng;
pub mod spectral;
pub mod timing;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use loss_models::{
    eval_gradients, eval_hessians, eval_split, GroupedDataset, ParameterVector, Part, Split, SplitLoss,
};
pub use spectral::SymmetricMatrix;

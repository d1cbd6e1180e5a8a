//! Weight-space diagnostics for neural network training.
//!
//! A network's parameters are treated as a point in Euclidean space. Training
//! shrinks the set of weights a randomized process can reach; the mean
//! distance between paired initial and final weights tracks that shrink and
//! therefore the information the process accumulates.
//!
//! - [`weights`]: weight vectors, ensembles, distances, snapshot files.
//! - [`mds`]: classical multidimensional scaling for ensemble plots.
//! - [`qmcm`]: nearest-distance estimators and the adaptive mean estimator.
//! - [`infometrics`]: entropy, mutual information, KL divergence.
//! - [`toytrain`]: a small MLP trainer with label-fraction and label-noise
//!   controls.
//! - [`harness`]: experiment drivers behind the `wodo` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod harness;
pub mod infometrics;
pub mod mds;
pub mod qmcm;
pub mod stats;
pub mod toytrain;
pub mod weights;

pub use error::{Error, Result};
pub use weights::{
    euclidean_distance, flatten_weights, load_snapshot, pairwise_distances, save_snapshot, DistanceMatrix, Layer,
    RunManifest, Stage, WeightEnsemble, WeightVector,
};

//! Desk-scale feed-forward classifier trainer and synthetic datasets.

mod data;
mod mlp;

pub use data::{changed_positions, corrupt_labels, make_blobs, restrict_labels, retained_classes, SyntheticDataset};
pub use mlp::{train, train_from, Activation, Budget, Mlp, MlpSpec, TrainConfig, TrainResult};

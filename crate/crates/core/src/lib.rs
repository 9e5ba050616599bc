//! Wasserstein-1 neural optimal transport.
//!
//! Learns a transport map between two unpaired point clouds in two stages:
//! first a 1-Lipschitz GroupSort network is trained to maximize the
//! Kantorovich-Rubinstein dual, recovering the transport direction as its
//! input gradient; then a non-negative per-sample step-size network is
//! trained adversarially to place each transported point. Exact discrete
//! matching oracles, distributional metrics, and toy data generators round
//! out the toolkit.

pub mod autodiff;
pub mod data;
pub mod dual;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod lipschitz;
pub mod optim;
pub mod oracle;
pub mod rng;

pub use autodiff::{grad_check, Tape, Tensor, Var};
pub use data::Dataset;
pub use dual::{dual_estimate, dual_loss, train_potential, DualTrainConfig, TrainHistory};
pub use error::{Error, Result};
pub use gan::{
    discriminator_loss, fit_w1ot, generator_loss, train_stepsize, Discriminator, FitResult,
    GanHistory, GanTrainConfig, StepSizeNet, TransportMap,
};
pub use lipschitz::{DomainBox, NetworkConfig, OrthoMethod, OrthonormalLayer, PotentialNet};
pub use metrics::{
    gradient_norm_stats, l2_feature_means, mmd_rbf, monotonicity_violation_rate,
    r2_feature_means, MetricsReport,
};
pub use optim::{cosine_lr, Adam};
pub use oracle::{dual_gap, w1_1d, w1_matching, MatchingResult};

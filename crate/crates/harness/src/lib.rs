//! Desk-scale training harness: synthetic data, a hand-differentiated MLP
//! encoder, supervised and distillation training loops, and convergence
//! experiments comparing negative samplers.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mlp;
pub mod preflight;
pub mod train;

pub use config::ExperimentConfig;
pub use data::{Dataset, SplitData};
pub use error::{HarnessError, Result};
pub use metrics::MetricsLog;
pub use mlp::MlpEncoder;
pub use train::{
    evaluate, needs_teacher, negative_sampler, pretrain_teacher, train_kd, train_supervised,
    TrainOptions, TrainOutcome,
};

//! Contrastive-learning engine built around semantically conditioned
//! negative sampling.
//!
//! * [`embedding`]: cosine similarity, softmax, exact top-k neighbors.
//! * [`sampling`]: uniform, class-level and instance-level negative samplers.
//! * [`memory`]: momentum lookup table plus FIFO queue of negative features.
//! * [`losses`]: value-and-gradient training objectives.
//! * [`theory`]: mutual-information bounds and coupon-collector sample
//!   complexity, each with a Monte Carlo counterpart.

pub mod embedding;
pub mod error;
pub mod format;
pub mod losses;
pub mod memory;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod theory;

pub use embedding::{EmbeddingMatrix, TopKNeighborTable};
pub use error::{Error, Result};
pub use losses::LossEvaluation;
pub use memory::ContrastMemory;
pub use sampling::{ContrastiveBatch, DatasetIndex, NegativeSamplingDistribution, SamplerKind};

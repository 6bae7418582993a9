//! Generative vector search over precomputed embeddings.
//!
//! The pipeline: train a conditional flow-matching model on embedding
//! targets, sample N query-conditioned embeddings at inference time, and
//! retrieve or classify with multi-sample nearest-neighbor search, CORAL
//! alignment, and von Mises-Fisher scoring.

pub mod augment;
pub mod bessel;
pub mod capacity;
pub mod coral;
pub mod distance;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod num;
pub mod parallel;
pub mod pca;
pub mod rng;
pub mod sampler;
pub mod sampling;
pub mod standardize;
pub mod store;
pub mod vmf;

pub use distance::{distance, l2_normalize, Metric};
pub use error::{Error, Result};
pub use matrix::EmbeddingMatrix;
pub use standardize::{standardize_apply, standardize_fit, standardize_invert, StandardizeStats};

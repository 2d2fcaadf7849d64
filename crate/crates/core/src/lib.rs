//! Semantic-dictionary multi-label classification.
//!
//! Class word embeddings are decoded by a small tied autoencoder into a
//! dictionary `D` in feature space. Each sample's features `f` are coded
//! against `D` by ridge regression, `alpha = (DᵀD + λI)⁻¹ Dᵀ f`, and the
//! class probabilities are `sigmoid(alpha)`. Training differentiates
//! through the ridge solve.

pub mod data;
pub mod diffcore;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod represent;
pub mod semdict;

pub use error::{Error, Result};
pub use numerics::Matrix;

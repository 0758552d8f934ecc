//! Embedding propagation and label propagation for transductive few-shot
//! classification on fixed feature embeddings.

pub mod classify;
pub mod diagnostics;
pub mod episodes;
pub mod error;
pub mod graph;
pub mod io;
pub mod numerics;
pub mod propagation;

pub use classify::{Classifier, ClassScores, LabelMatrix};
pub use episodes::{EmbeddingSet, Episode, EvalConfig, EvalReport, Split, SslMode};
pub use error::{Error, Result};
pub use graph::{GraphConfig, Propagator, DEFAULT_ALPHA};
pub use numerics::DenseMatrix;
pub use propagation::PropagationMode;

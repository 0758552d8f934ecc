//! Embedding propagation: each embedding is replaced by a propagator-weighted
//! sum of every embedding in the batch.
//!
//! The propagator is applied as is. Rows of `P` are not normalized, so the
//! propagated embeddings are not convex combinations of the inputs and their
//! norms generally grow (row sums approach `1 / (1 - α)` on dense graphs).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_propagator, GraphConfig, Propagator};
use crate::numerics::DenseMatrix;

/// Which part of the propagator is applied to the embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    #[default]
    Full,
    /// Propagator with its diagonal zeroed: neighbors only.
    #[serde(rename = "offdiag")]
    OffDiagonalOnly,
    /// Diagonal of the propagator only: a per-node rescaling.
    #[serde(rename = "diag")]
    DiagonalOnly,
    /// No propagation. The graph is still built for diagnostics.
    Identity,
}

impl PropagationMode {
    pub const ALL: [PropagationMode; 4] = [
        PropagationMode::Full,
        PropagationMode::OffDiagonalOnly,
        PropagationMode::DiagonalOnly,
        PropagationMode::Identity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropagationMode::Full => "full",
            PropagationMode::OffDiagonalOnly => "offdiag",
            PropagationMode::DiagonalOnly => "diag",
            PropagationMode::Identity => "identity",
        }
    }
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown propagation mode {s:?} (expected full|offdiag|diag|identity)"
                ))
            })
    }
}

/// Propagates the rows of `z` through the batch graph.
///
/// Returns the propagated embeddings together with the full propagator,
/// whichever `mode` was used to mix the rows.
pub fn propagate_embeddings(
    z: &DenseMatrix,
    cfg: &GraphConfig,
    mode: PropagationMode,
) -> Result<(DenseMatrix, Propagator)> {
    let prop = build_propagator(z, cfg)?;
    let p = &prop.matrix;
    let ztilde = match mode {
        PropagationMode::Full => p.matmul(z)?,
        PropagationMode::OffDiagonalOnly => {
            let mut off = p.clone();
            for i in 0..off.rows() {
                off[(i, i)] = 0.0;
            }
            off.matmul(z)?
        }
        PropagationMode::DiagonalOnly => {
            let mut out = z.clone();
            for (i, d) in p.diagonal().into_iter().enumerate() {
                out.row_mut(i).iter_mut().for_each(|v| *v *= d);
            }
            out
        }
        PropagationMode::Identity => z.clone(),
    };
    Ok((ztilde, prop))
}

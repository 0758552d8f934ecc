//! Transductive label propagation and the prototype baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_propagator, GraphConfig};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    #[default]
    #[serde(rename = "lp")]
    LabelProp,
    #[serde(rename = "proto")]
    Prototypical,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::LabelProp => "lp",
            Classifier::Prototypical => "proto",
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(Classifier::LabelProp),
            "proto" => Ok(Classifier::Prototypical),
            other => Err(Error::InvalidConfig(format!(
                "unknown classifier {other:?} (expected lp|proto)"
            ))),
        }
    }
}

/// One-hot rows for labeled nodes, zero rows for everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    matrix: DenseMatrix,
    assignments: Vec<Option<usize>>,
}

impl LabelMatrix {
    /// `assignments[i]` is the class of node `i`, or `None` if unlabeled.
    pub fn from_assignments(assignments: &[Option<usize>], n_classes: usize) -> Result<Self> {
        if assignments.is_empty() || n_classes == 0 {
            return Err(Error::DimensionMismatch(format!(
                "label matrix needs at least one node and one class, got {}x{n_classes}",
                assignments.len()
            )));
        }
        let mut matrix = DenseMatrix::zeros(assignments.len(), n_classes);
        for (row, a) in assignments.iter().enumerate() {
            if let Some(label) = *a {
                if label >= n_classes {
                    return Err(Error::LabelOutOfRange {
                        row,
                        label,
                        classes: n_classes,
                    });
                }
                matrix[(row, label)] = 1.0;
            }
        }
        Ok(Self {
            matrix,
            assignments: assignments.to_vec(),
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assignments
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.cols()
    }

    pub fn labeled_count(&self, class: usize) -> usize {
        self.assignments
            .iter()
            .filter(|a| **a == Some(class))
            .count()
    }

    fn check_every_class_labeled(&self) -> Result<()> {
        match (0..self.n_classes()).find(|&c| self.labeled_count(c) == 0) {
            Some(class) => Err(Error::EmptyClass { class }),
            None => Ok(()),
        }
    }
}

/// Node × class score matrix.
///
/// Label-propagation scores are nonnegative. Prototype scores are negative
/// squared distances and do not share that property.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub matrix: DenseMatrix,
}

impl ClassScores {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn select_rows(&self, rows: &[usize]) -> ClassScores {
        ClassScores {
            matrix: self.matrix.select_rows(rows),
        }
    }
}

/// Scores every node by diffusing the labels through a graph rebuilt on the
/// (already propagated) embeddings: `scores = P · Y`.
pub fn label_propagation_scores(
    ztilde: &DenseMatrix,
    labels: &LabelMatrix,
    cfg: &GraphConfig,
) -> Result<ClassScores> {
    if labels.rows() != ztilde.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} label rows for {} embeddings",
            labels.rows(),
            ztilde.rows()
        )));
    }
    labels.check_every_class_labeled()?;
    let p = build_propagator(ztilde, cfg)?;
    Ok(ClassScores {
        matrix: p.matrix.matmul(labels.matrix())?,
    })
}

/// Row-wise softmax.
pub fn softmax_probs(scores: &ClassScores) -> DenseMatrix {
    let mut out = scores.matrix.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Mean negative log-likelihood of the true classes.
pub fn lp_cross_entropy(probs: &DenseMatrix, true_labels: &[usize]) -> Result<f64> {
    if true_labels.len() != probs.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} probability rows",
            true_labels.len(),
            probs.rows()
        )));
    }
    let mut total = 0.0;
    for (row, &label) in true_labels.iter().enumerate() {
        if label >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: probs.cols(),
            });
        }
        let p = probs[(row, label)].max(f64::MIN_POSITIVE);
        total -= p.ln();
    }
    Ok((total / true_labels.len() as f64).max(0.0))
}

/// `score(q, c) = -‖z_q - μ_c‖²` with `μ_c` the mean of the class-`c` supports.
pub fn prototypical_scores(
    support_z: &DenseMatrix,
    support_labels: &[usize],
    n_classes: usize,
    query_z: &DenseMatrix,
) -> Result<ClassScores> {
    if support_labels.len() != support_z.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} support labels for {} support rows",
            support_labels.len(),
            support_z.rows()
        )));
    }
    if support_z.cols() != query_z.cols() {
        return Err(Error::DimensionMismatch(format!(
            "support dimension {} vs query dimension {}",
            support_z.cols(),
            query_z.cols()
        )));
    }
    if n_classes == 0 {
        return Err(Error::EmptyClass { class: 0 });
    }
    let dim = support_z.cols();
    let mut protos = DenseMatrix::zeros(n_classes, dim);
    let mut counts = vec![0usize; n_classes];
    for (row, &label) in support_labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: n_classes,
            });
        }
        counts[label] += 1;
        for (p, v) in protos.row_mut(label).iter_mut().zip(support_z.row(row)) {
            *p += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass { class: c });
        }
        protos.row_mut(c).iter_mut().for_each(|v| *v /= count as f64);
    }

    let mut scores = DenseMatrix::zeros(query_z.rows(), n_classes);
    for q in 0..query_z.rows() {
        for c in 0..n_classes {
            let d2: f64 = query_z
                .row(q)
                .iter()
                .zip(protos.row(c))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            scores[(q, c)] = -d2;
        }
    }
    Ok(ClassScores { matrix: scores })
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn predict(scores: &ClassScores) -> Vec<usize> {
    argmax_rows(&scores.matrix)
}

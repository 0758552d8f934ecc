//! Manifold-smoothness diagnostics: interpolation probability curves,
//! the two-moons toy set, and compactness metrics for propagated embeddings.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classify::softmax_probs;
use crate::episodes::{infer_batch, EmbeddingSet, Episode, EvalConfig};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::propagation::propagate_embeddings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCurve {
    /// Batch positions of the two endpoints.
    pub i: usize,
    pub j: usize,
    /// Weight of `z_i` at each grid point, increasing from 0 to 1.
    pub weights: Vec<f64>,
    /// Probability of the class of `i` at each grid point.
    pub probabilities: Vec<f64>,
    pub max_jump: f64,
}

/// Probability that `point`, appended to the episode batch as an extra
/// unlabeled node, belongs to episode class `class`.
pub fn query_probability(
    data: &EmbeddingSet,
    ep: &Episode,
    point: &[f64],
    class: usize,
    cfg: &EvalConfig,
) -> Result<f64> {
    let z = data.embeddings().select_rows(&ep.nodes());
    if point.len() != z.cols() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, embeddings have {}",
            point.len(),
            z.cols()
        )));
    }
    if class >= ep.n_way() {
        return Err(Error::LabelOutOfRange {
            row: z.rows(),
            label: class,
            classes: ep.n_way(),
        });
    }
    let batch = z.vstack(&DenseMatrix::new(1, point.len(), point.to_vec())?)?;
    let mut assignments = ep.label_assignments();
    assignments.push(None);
    let (_, scores) = infer_batch(&batch, &assignments, ep.n_way(), cfg)?;
    let probs = softmax_probs(&scores);
    Ok(probs[(batch.rows() - 1, class)])
}

/// Sweeps `w·z_i + (1-w)·z_j` over an even grid of `grid_size` weights in
/// [0, 1]; `i` and `j` are batch positions in the episode.
pub fn interpolation_curve(
    data: &EmbeddingSet,
    ep: &Episode,
    i: usize,
    j: usize,
    grid_size: usize,
    cfg: &EvalConfig,
) -> Result<InterpolationCurve> {
    if grid_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid needs at least 2 points, got {grid_size}"
        )));
    }
    let nodes = ep.nodes();
    if i >= nodes.len() || j >= nodes.len() {
        return Err(Error::DimensionMismatch(format!(
            "pair ({i}, {j}) outside an episode of {} nodes",
            nodes.len()
        )));
    }
    let truth = ep.node_labels();
    if truth[i] == truth[j] {
        return Err(Error::SameClassPair { i, j });
    }
    let zi = data.embeddings().row(nodes[i]);
    let zj = data.embeddings().row(nodes[j]);

    let mut weights = Vec::with_capacity(grid_size);
    let mut probabilities = Vec::with_capacity(grid_size);
    let last = (grid_size - 1) as f64;
    for g in 0..grid_size {
        let w = g as f64 / last;
        let point: Vec<f64> = zi
            .iter()
            .zip(zj)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        weights.push(w);
        probabilities.push(query_probability(data, ep, &point, truth[i], cfg)?);
    }
    let max_jump = probabilities
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    Ok(InterpolationCurve {
        i,
        j,
        weights,
        probabilities,
        max_jump,
    })
}

/// Draws `count` batch-position pairs with different true classes.
pub fn sample_pairs(ep: &Episode, count: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    let truth = ep.node_labels();
    let n = truth.len();
    if ep.n_way() < 2 || n < 2 {
        return Err(Error::InvalidConfig(
            "interpolation pairs need at least two classes".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if truth[i] != truth[j] {
            pairs.push((i, j));
        }
    }
    Ok(pairs)
}

/// Two interleaved half circles: moon 0 is `(cos t, sin t)`, moon 1 is
/// `(1 - cos t, 0.5 - sin t)`, `t ~ U[0, π]`, plus isotropic Gaussian noise.
/// Labels are `"0"` and `"1"`.
pub fn two_moons(n_per_moon: usize, noise_sd: f64, seed: u64) -> Result<EmbeddingSet> {
    if n_per_moon == 0 {
        return Err(Error::InvalidConfig("n_per_moon must be at least 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise standard deviation must be nonnegative, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(4 * n_per_moon);
    let mut labels = Vec::with_capacity(2 * n_per_moon);
    let mut ids = Vec::with_capacity(2 * n_per_moon);
    for moon in 0..2 {
        for k in 0..n_per_moon {
            let t = rng.random_range(0.0..=std::f64::consts::PI);
            let (x, y) = if moon == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            data.push(x + noise_sd * nx);
            data.push(y + noise_sd * ny);
            labels.push(moon.to_string());
            ids.push(format!("moon{moon}-{k}"));
        }
    }
    let n = 2 * n_per_moon;
    EmbeddingSet::with_ids(ids, DenseMatrix::new(n, 2, data)?, labels, vec![None; n])
}

/// Isotropic Gaussian clusters around mutually orthogonal centers
/// `e_c / √2`, so every pair of centers is exactly distance 1 apart.
///
/// `spread` is the RMS distance of a point from its center, relative to that
/// inter-center distance; each coordinate gets standard deviation
/// `spread / √dim`. Labels are `"c000"`, `"c001"`, ...
pub fn gaussian_clusters(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    if classes == 0 || per_class == 0 || dim < classes {
        return Err(Error::InvalidConfig(format!(
            "need classes ≥ 1, per_class ≥ 1 and dim ≥ classes (got {classes}, {per_class}, {dim})"
        )));
    }
    let normal = Normal::new(0.0, spread / (dim as f64).sqrt())
        .map_err(|e| Error::InvalidConfig(format!("spread {spread}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = std::f64::consts::FRAC_1_SQRT_2;
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for _ in 0..per_class {
            for d in 0..dim {
                let base = if d == c { center } else { 0.0 };
                data.push(base + normal.sample(&mut rng));
            }
            labels.push(format!("c{c:03}"));
        }
    }
    EmbeddingSet::new(DenseMatrix::new(n, dim, data)?, labels, vec![None; n])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactnessMetrics {
    pub intra_before: f64,
    pub intra_after: f64,
    pub inter_before: f64,
    pub inter_after: f64,
    /// `intra_after / intra_before`.
    pub intra_ratio: f64,
    /// `inter_after / inter_before`.
    pub inter_ratio: f64,
}

impl CompactnessMetrics {
    /// Change of the intra/inter distance ratio; below 1 means classes got
    /// tighter relative to their separation, whatever the overall scale.
    pub fn relative_compactness(&self) -> f64 {
        (self.intra_after / self.inter_after) / (self.intra_before / self.inter_before)
    }
}

/// Mean (intra-class, inter-class) Euclidean pair distance; NaN when a kind
/// of pair does not exist.
fn pair_distances<L: PartialEq>(z: &DenseMatrix, labels: &[L]) -> (f64, f64) {
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..z.rows() {
        for j in (i + 1)..z.rows() {
            let d = z
                .row(i)
                .iter()
                .zip(z.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    (intra / n_intra as f64, inter / n_inter as f64)
}

pub fn compactness_metrics<L: PartialEq>(
    z: &DenseMatrix,
    labels: &[L],
    ztilde: &DenseMatrix,
) -> Result<CompactnessMetrics> {
    if z.shape() != ztilde.shape() || labels.len() != z.rows() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings {:?}, propagated {:?}, {} labels",
            z.shape(),
            ztilde.shape(),
            labels.len()
        )));
    }
    let (intra_before, inter_before) = pair_distances(z, labels);
    let (intra_after, inter_after) = pair_distances(ztilde, labels);
    Ok(CompactnessMetrics {
        intra_before,
        intra_after,
        inter_before,
        inter_after,
        intra_ratio: intra_after / intra_before,
        inter_ratio: inter_after / inter_before,
    })
}

/// Where one point lands when propagated inside one random batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProjection {
    pub point: usize,
    pub batch: usize,
    pub original: Vec<f64>,
    pub propagated: Vec<f64>,
}

/// Propagates `batches` random subsets of `batch_size` rows and records every
/// (point, batch) projection.
pub fn batch_projections(
    data: &EmbeddingSet,
    batch_size: usize,
    batches: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<BatchProjection>> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::InvalidConfig(format!(
            "batch size must be in 1..={}, got {batch_size}",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(batch_size * batches);
    for b in 0..batches {
        let mut rng = crate::episodes::episode_rng(seed, b);
        let mut rows = index::sample(&mut rng, data.len(), batch_size).into_vec();
        rows.sort_unstable();
        let z = data.embeddings().select_rows(&rows);
        let (zt, _) = propagate_embeddings(&z, &cfg.graph, cfg.mode)?;
        for (k, &r) in rows.iter().enumerate() {
            out.push(BatchProjection {
                point: r,
                batch: b,
                original: z.row(k).to_vec(),
                propagated: zt.row(k).to_vec(),
            });
        }
    }
    Ok(out)
}

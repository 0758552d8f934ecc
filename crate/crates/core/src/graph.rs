//! Similarity graph over a batch of embeddings and its propagator.
//!
//! Given `n` embeddings the pipeline is
//! squared distances → RBF adjacency (zero diagonal) →
//! `L = D^{-1/2} A D^{-1/2}` → `P = (I - αL)^{-1}`.
//!
//! The RBF bandwidth defaults to the population variance of the off-diagonal
//! squared distances. When that variance collapses (a single node, or every
//! pair equally far apart) a fixed fallback bandwidth is used instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{solve_spd, DenseMatrix};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Propagation strength, strictly inside (0, 1).
    pub alpha: f64,
    /// Fixed RBF bandwidth; `None` derives it from the batch.
    pub sigma2_override: Option<f64>,
    pub variance_floor: f64,
    pub fallback_sigma2: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            sigma2_override: None,
            variance_floor: 1e-12,
            fallback_sigma2: 1.0,
        }
    }
}

impl GraphConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(s) = self.sigma2_override {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "sigma2 override must be positive, got {s}"
                )));
            }
        }
        if !(self.variance_floor > 0.0) || !(self.fallback_sigma2 > 0.0) {
            return Err(Error::InvalidConfig(
                "variance floor and fallback sigma2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `P = (I - αL)^{-1}` for one node batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub matrix: DenseMatrix,
    pub alpha: f64,
    /// Bandwidth used to build the adjacency; `None` when built from a bare
    /// Laplacian via [`propagator`].
    pub sigma2: Option<f64>,
}

impl Propagator {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn pairwise_sq_distances(z: &DenseMatrix) -> Result<DenseMatrix> {
    let n = z.rows();
    if let Some(pos) = z.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            row: pos / z.cols(),
            col: pos % z.cols(),
        });
    }
    let mut d2 = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let zi = z.row(i);
        for j in (i + 1)..n {
            let s: f64 = zi
                .iter()
                .zip(z.row(j))
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum();
            d2[(i, j)] = s;
            d2[(j, i)] = s;
        }
    }
    Ok(d2)
}

/// RBF adjacency `exp(-d²/σ²)` with a zero diagonal, and the σ² used.
pub fn adjacency(d2: &DenseMatrix, cfg: &GraphConfig) -> Result<(DenseMatrix, f64)> {
    cfg.validate()?;
    validate_distances(d2)?;
    let n = d2.rows();

    let sigma2 = match cfg.sigma2_override {
        Some(s) => s,
        None => {
            let var = off_diagonal_variance(d2);
            match var {
                Some(v) if v >= cfg.variance_floor => v,
                _ => cfg.fallback_sigma2,
            }
        }
    };

    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (-d2[(i, j)] / sigma2).exp();
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    Ok((a, sigma2))
}

fn validate_distances(d2: &DenseMatrix) -> Result<()> {
    if !d2.is_square() {
        return Err(Error::InvalidDistanceMatrix(format!(
            "expected a square matrix, got {}x{}",
            d2.rows(),
            d2.cols()
        )));
    }
    let scale = d2.max_abs().max(1.0);
    let n = d2.rows();
    for i in 0..n {
        if d2[(i, i)].abs() > 1e-12 * scale {
            return Err(Error::InvalidDistanceMatrix(format!(
                "nonzero diagonal at {i}: {}",
                d2[(i, i)]
            )));
        }
        for j in 0..n {
            let v = d2[(i, j)];
            if v < 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "negative entry at ({i}, {j}): {v}"
                )));
            }
        }
    }
    if !d2.is_symmetric(1e-9) {
        return Err(Error::InvalidDistanceMatrix(format!(
            "asymmetry {:e}",
            d2.max_asymmetry()
        )));
    }
    Ok(())
}

/// Population variance over all ordered off-diagonal entries; `None` for n = 1.
fn off_diagonal_variance(d2: &DenseMatrix) -> Option<f64> {
    let n = d2.rows();
    if n < 2 {
        return None;
    }
    let count = (n * (n - 1)) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += d2[(i, j)];
            }
        }
    }
    let mean = sum / count;
    let mut ss = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = d2[(i, j)] - mean;
                ss += d * d;
            }
        }
    }
    Some(ss / count)
}

/// Degree-normalized adjacency `D^{-1/2} A D^{-1/2}`.
///
/// A single node has zero degree and maps to `[[0]]`.
pub fn normalized_laplacian(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n == 1 {
        return Ok(DenseMatrix::zeros(1, 1));
    }
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, row) in a.iter_rows().enumerate() {
        let deg: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| v)
            .sum();
        if !(deg > 0.0) {
            return Err(Error::IsolatedNode { node: i });
        }
        inv_sqrt.push(1.0 / deg.sqrt());
    }
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    Ok(l)
}

/// `(I - αL)^{-1}` via a Cholesky solve against the identity.
pub fn propagator(l: &DenseMatrix, alpha: f64) -> Result<Propagator> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !l.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian must be square, got {}x{}",
            l.rows(),
            l.cols()
        )));
    }
    let n = l.rows();
    let mut system = l.scale(-alpha);
    for i in 0..n {
        system[(i, i)] += 1.0;
    }
    let mut matrix = solve_spd(&system, &DenseMatrix::identity(n))?;
    matrix.symmetrize();
    Ok(Propagator {
        matrix,
        alpha,
        sigma2: None,
    })
}

/// Distances, adjacency, Laplacian and propagator for the rows of `z`.
pub fn build_propagator(z: &DenseMatrix, cfg: &GraphConfig) -> Result<Propagator> {
    let d2 = pairwise_sq_distances(z)?;
    let (a, sigma2) = adjacency(&d2, cfg)?;
    let l = normalized_laplacian(&a)?;
    let mut p = propagator(&l, cfg.alpha)?;
    p.sigma2 = Some(sigma2);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    /// Σ_{k≤terms} αᵏ Lᵏ, independent of the Cholesky path.
    fn neumann(l: &DenseMatrix, alpha: f64, terms: usize) -> DenseMatrix {
        let n = l.rows();
        let mut sum = DenseMatrix::identity(n);
        let mut power = DenseMatrix::identity(n);
        let al = l.scale(alpha);
        for _ in 0..terms {
            power = power.matmul(&al).unwrap();
            sum = sum.add(&power).unwrap();
        }
        sum
    }

    #[test]
    fn distances_pythagorean() {
        let d = pairwise_sq_distances(&m(&[&[0.0, 0.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(d, m(&[&[0.0, 25.0], &[25.0, 0.0]]));
    }

    #[test]
    fn distances_single_row() {
        let d = pairwise_sq_distances(&m(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(d, DenseMatrix::zeros(1, 1));
    }

    #[test]
    fn distances_three_points() {
        let d = pairwise_sq_distances(&m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]])).unwrap();
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 2)], 4.0);
        assert_eq!(d[(1, 2)], 5.0);
        assert!(d.is_symmetric(0.0));
    }

    #[test]
    fn adjacency_variance_bandwidth() {
        let d = pairwise_sq_distances(&m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]])).unwrap();
        let (a, s2) = adjacency(&d, &GraphConfig::default()).unwrap();
        // mean 10/3, population variance of {1,4,5,1,4,5} = 26/9
        assert!((s2 - 26.0 / 9.0).abs() < 1e-12);
        assert!((a[(0, 1)] - 0.7074).abs() < 1e-4);
        assert!((a[(0, 2)] - 0.2504).abs() < 1e-4);
        assert!((a[(1, 2)] - 0.1772).abs() < 1e-4);
        assert_eq!(a.diagonal(), vec![0.0; 3]);
    }

    #[test]
    fn adjacency_fallback_on_zero_variance() {
        let d = m(&[&[0.0, 25.0], &[25.0, 0.0]]);
        let (a, s2) = adjacency(&d, &GraphConfig::default()).unwrap();
        assert_eq!(s2, 1.0);
        assert_eq!(a[(0, 1)], (-25.0f64).exp());

        let (_, s2) = adjacency(&DenseMatrix::zeros(1, 1), &GraphConfig::default()).unwrap();
        assert_eq!(s2, 1.0);
    }

    #[test]
    fn adjacency_override_lower_bound() {
        let d = pairwise_sq_distances(&m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0], &[3.0, 3.0]]))
            .unwrap();
        let cfg = GraphConfig {
            sigma2_override: Some(d.max_abs()),
            ..GraphConfig::default()
        };
        let (a, s2) = adjacency(&d, &cfg).unwrap();
        assert_eq!(s2, 18.0);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(a[(i, j)] >= (-1.0f64).exp());
                }
            }
        }
    }

    #[test]
    fn adjacency_rejects_bad_distances() {
        let cfg = GraphConfig::default();
        let asym = m(&[&[0.0, 1.0], &[2.0, 0.0]]);
        let neg = m(&[&[0.0, -1.0], &[-1.0, 0.0]]);
        let diag = m(&[&[1.0, 1.0], &[1.0, 0.0]]);
        for bad in [asym, neg, diag] {
            assert!(matches!(
                adjacency(&bad, &cfg),
                Err(Error::InvalidDistanceMatrix(_))
            ));
        }
    }

    #[test]
    fn config_validation() {
        assert!(GraphConfig::with_alpha(0.0).validate().is_err());
        assert!(GraphConfig::with_alpha(1.0).validate().is_err());
        let bad = GraphConfig {
            sigma2_override: Some(0.0),
            ..GraphConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(GraphConfig::default().validate().is_ok());
    }

    #[test]
    fn laplacian_two_nodes_cancels_weight() {
        for w in [1e-3, 0.3, 1.0] {
            let l = normalized_laplacian(&m(&[&[0.0, w], &[w, 0.0]])).unwrap();
            assert!(l.max_abs_diff(&m(&[&[0.0, 1.0], &[1.0, 0.0]])) < 1e-15);
        }
    }

    #[test]
    fn laplacian_equal_clique() {
        let w = 0.4;
        let a = m(&[&[0.0, w, w], &[w, 0.0, w], &[w, w, 0.0]]);
        let l = normalized_laplacian(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert!((l[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_single_node_and_isolated() {
        assert_eq!(
            normalized_laplacian(&DenseMatrix::zeros(1, 1)).unwrap(),
            DenseMatrix::zeros(1, 1)
        );
        let a = m(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        assert!(matches!(
            normalized_laplacian(&a),
            Err(Error::IsolatedNode { node: 2 })
        ));
    }

    #[test]
    fn propagator_two_nodes() {
        let p = propagator(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), 0.5).unwrap();
        let expected = m(&[&[4.0 / 3.0, 2.0 / 3.0], &[2.0 / 3.0, 4.0 / 3.0]]);
        assert!(p.matrix.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn propagator_identity_limit() {
        let z = m(&[&[0.0, 1.0], &[2.0, 0.5], &[-1.0, 3.0], &[0.2, 0.2]]);
        let p = build_propagator(&z, &GraphConfig::with_alpha(1e-12)).unwrap();
        assert!(p.matrix.max_abs_diff(&DenseMatrix::identity(4)) <= 1e-10);
    }

    #[test]
    fn propagator_matches_neumann_on_six_nodes() {
        let z = m(&[
            &[0.1, 0.3],
            &[1.2, -0.4],
            &[0.7, 0.9],
            &[-0.5, 0.2],
            &[2.0, 1.1],
            &[0.0, -1.3],
        ]);
        let d2 = pairwise_sq_distances(&z).unwrap();
        let (a, _) = adjacency(&d2, &GraphConfig::default()).unwrap();
        let l = normalized_laplacian(&a).unwrap();
        let p = propagator(&l, 0.3).unwrap();
        assert!(p.matrix.max_abs_diff(&neumann(&l, 0.3, 200)) <= 1e-6);
    }

    #[test]
    fn propagator_rejects_bad_alpha() {
        let l = DenseMatrix::zeros(2, 2);
        assert!(propagator(&l, 1.0).is_err());
        assert!(propagator(&l, -0.1).is_err());
    }

    fn points(max_n: usize) -> impl Strategy<Value = DenseMatrix> {
        (1usize..=max_n, 1usize..=4).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-5.0f64..5.0, n * d)
                .prop_map(move |v| DenseMatrix::new(n, d, v).unwrap())
        })
    }

    fn pipeline(z: &DenseMatrix, alpha: f64) -> (DenseMatrix, DenseMatrix, DenseMatrix, Propagator) {
        let d2 = pairwise_sq_distances(z).unwrap();
        let (a, _) = adjacency(&d2, &GraphConfig::with_alpha(alpha)).unwrap();
        let l = normalized_laplacian(&a).unwrap();
        let p = propagator(&l, alpha).unwrap();
        (d2, a, l, p)
    }

    proptest! {
        #[test]
        fn rigid_motion_invariance(
            z in points(10),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in (-10.0f64..10.0, -10.0f64..10.0),
        ) {
            let (c, s) = (angle.cos(), angle.sin());
            let mut moved = z.clone();
            for i in 0..z.rows() {
                let row = moved.row_mut(i);
                if row.len() >= 2 {
                    let (x, y) = (row[0], row[1]);
                    row[0] = c * x - s * y + shift.0;
                    row[1] = s * x + c * y + shift.1;
                } else {
                    row[0] += shift.0;
                }
            }
            let (_, a0, _, _) = pipeline(&z, 0.5);
            let (_, a1, _, _) = pipeline(&moved, 0.5);
            prop_assert!(a0.max_abs_diff(&a1) <= 1e-9);
        }

        #[test]
        fn permutation_equivariance(z in points(12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = z.rows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (d2, a, l, p) = pipeline(&z, 0.5);
            let (pd2, pa, pl, pp) = pipeline(&z.select_rows(&perm), 0.5);
            prop_assert!(d2.permute_symmetric(&perm).max_abs_diff(&pd2) <= 1e-9);
            prop_assert!(a.permute_symmetric(&perm).max_abs_diff(&pa) <= 1e-9);
            prop_assert!(l.permute_symmetric(&perm).max_abs_diff(&pl) <= 1e-9);
            prop_assert!(p.matrix.permute_symmetric(&perm).max_abs_diff(&pp.matrix) <= 1e-9);
        }

        #[test]
        fn propagator_structure(z in points(16), alpha in 0.01f64..0.99) {
            let (_, _, _, p) = pipeline(&z, alpha);
            prop_assert!(p.matrix.max_asymmetry() <= 1e-9);
            prop_assert!(p.matrix.as_slice().iter().all(|&v| v >= -1e-9));
            prop_assert!(p.matrix.diagonal().iter().all(|&v| v >= 1.0 - 1e-9));
        }

        #[test]
        fn neumann_series_converges(z in points(8), which in 0usize..3) {
            let alpha = [0.1, 0.5, 0.9][which];
            let (_, _, l, p) = pipeline(&z, alpha);
            let coarse = p.matrix.max_abs_diff(&neumann(&l, alpha, 20));
            let fine = p.matrix.max_abs_diff(&neumann(&l, alpha, 400));
            prop_assert!(fine <= 1e-6);
            prop_assert!(fine <= coarse + 1e-12);
        }
    }
}

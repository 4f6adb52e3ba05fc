//! Locally linear embedding over the base-class columns, with the
//! out-of-sample extension that re-embeds arbitrary vectors through their
//! original-space reconstruction weights.
//!
//! Fitting reconstructs every column from its k nearest other columns,
//! assembles the reconstruction matrix `M = (I - W)(I - W)^T`, and takes the
//! eigenvectors of the smallest nontrivial eigenvalues as the reduced
//! coordinates. The constant eigenvector (eigenvalue ~ 0) is skipped. A new
//! vector is embedded by finding its nearest base columns, solving the same
//! constrained reconstruction for weights in the original space, and applying
//! those weights to the reduced columns.

use nalgebra::{DMatrix, DVector};

use crate::cbm::{bi_path_scores_with, CbmConfig};
use crate::embedding::BaseMatrix;
use crate::error::{CbmError, Result};
use crate::inductive::Episode;

/// Default Tikhonov factor for the local covariance solve.
pub const DEFAULT_LLE_REG: f64 = 1e-3;

/// Absolute floor applied when the local covariance has zero trace
/// (all neighbors coincide with the query point).
const ZERO_TRACE_FLOOR: f64 = 1e-12;

/// Hyperparameters of the embedding.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LleConfig {
    /// Neighbor count used both for fitting and out-of-sample embedding.
    pub k: usize,
    /// Output dimensionality.
    pub c_prime: usize,
    /// Whether columns (and transform inputs) are L2-normalized first.
    pub l2_normalize: bool,
    /// Regularization coefficient for the local covariance.
    pub reg: f64,
}

impl LleConfig {
    pub fn new(k: usize, c_prime: usize) -> Self {
        Self {
            k,
            c_prime,
            l2_normalize: false,
            reg: DEFAULT_LLE_REG,
        }
    }

    /// Checks the bounds against the number of base classes.
    pub fn validate(&self, n_base: usize) -> Result<()> {
        if self.k == 0 {
            return Err(CbmError::InvalidConfig("k must be at least 1".into()));
        }
        if self.k >= n_base {
            return Err(CbmError::KTooLarge {
                k: self.k,
                available: n_base.saturating_sub(1),
            });
        }
        if self.c_prime == 0 || self.c_prime > n_base - 1 {
            return Err(CbmError::InvalidConfig(format!(
                "c_prime must be in [1, {}], got {}",
                n_base - 1,
                self.c_prime
            )));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(CbmError::InvalidConfig(format!(
                "reg must be nonnegative, got {}",
                self.reg
            )));
        }
        Ok(())
    }
}

/// A fitted embedding: the (optionally normalized) base columns, the sparse
/// reconstruction weights, and the reduced coordinates.
#[derive(Debug, Clone)]
pub struct LleModel {
    base: DMatrix<f64>,
    weight_matrix: DMatrix<f64>,
    neighbor_indices: Vec<Vec<usize>>,
    reduced: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    config: LleConfig,
}

impl LleModel {
    /// The base columns as seen by the embedding (post-normalization).
    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    /// Dense `n x n` reconstruction weight matrix; column `i` holds the
    /// weights of column `i`'s reconstruction, placed at its neighbors' rows.
    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.weight_matrix
    }

    /// Neighbor column indices used for each column's reconstruction.
    pub fn neighbor_indices(&self) -> &[Vec<usize>] {
        &self.neighbor_indices
    }

    /// The `c' x n` reduced base matrix.
    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// Eigenvalues of the retained eigenvectors, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn config(&self) -> &LleConfig {
        &self.config
    }

    /// Input dimension expected by [`transform`].
    pub fn input_dim(&self) -> usize {
        self.base.nrows()
    }

    /// The symmetric reconstruction matrix `M = (I - W)(I - W)^T`.
    pub fn reconstruction_matrix(&self) -> DMatrix<f64> {
        let n = self.weight_matrix.ncols();
        let iw = DMatrix::identity(n, n) - &self.weight_matrix;
        let m = &iw * iw.transpose();
        symmetrize(m)
    }
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub(crate) fn knn_columns(
    matrix: &DMatrix<f64>,
    x: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    if x.len() != matrix.nrows() {
        return Err(CbmError::DimensionMismatch {
            expected: matrix.nrows(),
            actual: x.len(),
        });
    }
    if k == 0 {
        return Err(CbmError::InvalidConfig("k must be at least 1".into()));
    }
    let n = matrix.ncols();
    let eligible = n - usize::from(exclude.is_some_and(|e| e < n));
    if k > eligible {
        return Err(CbmError::KTooLarge {
            k,
            available: eligible,
        });
    }
    let c = matrix.nrows();
    let data = matrix.as_slice();
    let mut by_distance: Vec<(f64, usize)> = (0..n)
        .filter(|&i| Some(i) != exclude)
        .map(|i| {
            let col = &data[i * c..(i + 1) * c];
            let mut sq = 0.0;
            for (a, b) in x.iter().zip(col) {
                let d = a - b;
                sq += d * d;
            }
            (sq, i)
        })
        .collect();
    by_distance.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(by_distance.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Indices of the `k` base columns nearest to `x` in Euclidean distance,
/// ascending by distance with ties broken toward the lower index. `exclude`
/// removes one column from candidacy (self-exclusion during fitting).
pub fn knn(base: &BaseMatrix, x: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
    knn_columns(base.matrix(), x, k, exclude)
}

/// Reconstruction weights of `x` over its neighbor columns: the minimizer of
/// `||x - N w||^2` under `sum(w) = 1`, with the local covariance regularized
/// by `reg * trace/k` before inversion.
pub fn local_weights(x: &[f64], neighbors: &DMatrix<f64>, reg: f64) -> Result<Vec<f64>> {
    let c = neighbors.nrows();
    let k = neighbors.ncols();
    if x.len() != c {
        return Err(CbmError::DimensionMismatch {
            expected: c,
            actual: x.len(),
        });
    }
    if k == 0 {
        return Err(CbmError::InvalidConfig("need at least one neighbor".into()));
    }
    if !(reg.is_finite() && reg >= 0.0) {
        return Err(CbmError::InvalidConfig(format!(
            "reg must be nonnegative, got {reg}"
        )));
    }

    // diffs: column j = x - n_j
    let mut diffs = DMatrix::zeros(c, k);
    for j in 0..k {
        for i in 0..c {
            diffs[(i, j)] = x[i] - neighbors[(i, j)];
        }
    }
    let mut cov = diffs.transpose() * &diffs;
    let trace = cov.trace();
    let mut eps = reg * if trace > 0.0 { trace / k as f64 } else { 1.0 };
    if trace == 0.0 {
        eps = eps.max(ZERO_TRACE_FLOOR);
    }
    for i in 0..k {
        cov[(i, i)] += eps;
    }

    let ones = DVector::from_element(k, 1.0);
    let solution = cov
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&ones))
        .or_else(|| cov.lu().solve(&ones));
    let w = solution.ok_or(CbmError::SingularSystem)?;
    let sum = w.sum();
    if !(sum.is_finite() && sum != 0.0) {
        return Err(CbmError::SingularSystem);
    }
    let w: Vec<f64> = w.iter().map(|v| v / sum).collect();
    if !w.iter().all(|v| v.is_finite()) {
        return Err(CbmError::SingularSystem);
    }
    Ok(w)
}

fn l2_normalize_columns(matrix: &mut DMatrix<f64>) -> Result<()> {
    let c = matrix.nrows();
    for j in 0..matrix.ncols() {
        let mut norm_sq = 0.0;
        for i in 0..c {
            norm_sq += matrix[(i, j)] * matrix[(i, j)];
        }
        if norm_sq == 0.0 {
            return Err(CbmError::ZeroVector);
        }
        let inv = 1.0 / norm_sq.sqrt();
        for i in 0..c {
            matrix[(i, j)] *= inv;
        }
    }
    Ok(())
}

fn neighbor_columns(matrix: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let c = matrix.nrows();
    DMatrix::from_fn(c, indices.len(), |i, j| matrix[(i, indices[j])])
}

/// Fit the embedding on the base columns.
pub fn fit_lle(base: &BaseMatrix, config: &LleConfig) -> Result<LleModel> {
    let n = base.n_classes();
    config.validate(n)?;

    let mut columns = base.matrix().clone();
    if config.l2_normalize {
        l2_normalize_columns(&mut columns)?;
    }
    let c = columns.nrows();
    let data_owned = columns.as_slice().to_vec();

    let mut weight_matrix = DMatrix::zeros(n, n);
    let mut neighbor_indices = Vec::with_capacity(n);
    for i in 0..n {
        let x = &data_owned[i * c..(i + 1) * c];
        let neighbors = knn_columns(&columns, x, config.k, Some(i))?;
        let w = local_weights(x, &neighbor_columns(&columns, &neighbors), config.reg)?;
        for (j, &neighbor) in neighbors.iter().enumerate() {
            weight_matrix[(neighbor, i)] = w[j];
        }
        neighbor_indices.push(neighbors);
    }

    let identity = DMatrix::identity(n, n);
    let iw = &identity - &weight_matrix;
    let m = symmetrize(&iw * iw.transpose());

    let eigen = nalgebra::linalg::SymmetricEigen::try_new(m, f64::EPSILON, 100_000)
        .ok_or(CbmError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .unwrap()
    });

    // skip the constant near-zero eigenvector, keep the next c' ascending
    let mut reduced = DMatrix::zeros(config.c_prime, n);
    let mut eigenvalues = Vec::with_capacity(config.c_prime);
    for (row, &idx) in order[1..=config.c_prime].iter().enumerate() {
        let v = eigen.eigenvectors.column(idx);
        // deterministic sign: make the largest-magnitude component positive
        let mut arg_max = 0;
        for i in 1..n {
            if v[i].abs() > v[arg_max].abs() {
                arg_max = i;
            }
        }
        let sign = if v[arg_max] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            reduced[(row, i)] = sign * v[i];
        }
        eigenvalues.push(eigen.eigenvalues[idx]);
    }

    Ok(LleModel {
        base: columns,
        weight_matrix,
        neighbor_indices,
        reduced,
        eigenvalues,
        config: *config,
    })
}

/// Embed a new vector: nearest base columns, reconstruction weights in the
/// original space, and the same weighted combination of reduced columns.
pub fn transform(x: &[f64], model: &LleModel) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(CbmError::DimensionMismatch {
            expected: model.input_dim(),
            actual: x.len(),
        });
    }
    let normalized;
    let x = if model.config.l2_normalize {
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        if norm_sq == 0.0 {
            return Err(CbmError::ZeroVector);
        }
        let inv = 1.0 / norm_sq.sqrt();
        normalized = x.iter().map(|v| v * inv).collect::<Vec<f64>>();
        normalized.as_slice()
    } else {
        x
    };

    let neighbors = knn_columns(&model.base, x, model.config.k, None)?;
    let w = local_weights(
        x,
        &neighbor_columns(&model.base, &neighbors),
        model.config.reg,
    )?;
    let c_prime = model.reduced.nrows();
    let mut out = vec![0.0; c_prime];
    for (j, &idx) in neighbors.iter().enumerate() {
        for (d, o) in out.iter_mut().enumerate() {
            *o += w[j] * model.reduced[(d, idx)];
        }
    }
    Ok(out)
}

/// Bi-path scores where the transductive path runs in the reduced space of a
/// fitted model; the inductive path stays in the original space.
pub fn cbm_lle_scores_with_model(
    episode: &Episode,
    model: &LleModel,
    cbm_config: &CbmConfig,
) -> Result<Vec<Vec<f64>>> {
    if episode.dim() != model.input_dim() {
        return Err(CbmError::DimensionMismatch {
            expected: model.input_dim(),
            actual: episode.dim(),
        });
    }
    bi_path_scores_with(
        episode,
        model.reduced(),
        |v| transform(v, model),
        cbm_config,
    )
}

/// Convenience wrapper fitting the embedding and scoring one episode.
pub fn cbm_lle_scores(
    episode: &Episode,
    base: &BaseMatrix,
    lle_config: &LleConfig,
    cbm_config: &CbmConfig,
) -> Result<Vec<Vec<f64>>> {
    let model = fit_lle(base, lle_config)?;
    cbm_lle_scores_with_model(episode, &model, cbm_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbm::cbm_scores;
    use crate::embedding::EmbeddingVector;
    use crate::inductive::{classify, episode_prototypes, inductive_scores};
    use crate::metrics::Similarity;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_from_columns(cols: &[Vec<f64>]) -> BaseMatrix {
        let dim = cols[0].len();
        let matrix = DMatrix::from_fn(dim, cols.len(), |r, c| cols[c][r]);
        BaseMatrix::new(matrix, (0..cols.len() as u32).collect()).unwrap()
    }

    fn random_columns(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    // -- knn ---------------------------------------------------------------

    #[test]
    fn knn_exact_match_is_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let cols = random_columns(&mut rng, 4, 6);
        let base = base_from_columns(&cols);
        let hits = knn(&base, &cols[3], 1, None).unwrap();
        assert_eq!(hits, vec![3]);
    }

    #[test]
    fn knn_self_exclusion_picks_other_column() {
        let cols = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![5.0, 5.0],
            vec![0.1, 0.0],
        ];
        let base = base_from_columns(&cols);
        let hits = knn(&base, &cols[3], 1, Some(3)).unwrap();
        assert_eq!(hits, vec![0]);
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cols = random_columns(&mut rng, 5, 10);
        let base = base_from_columns(&cols);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = knn(&base, &x, 4, None).unwrap();

        // oracle: sort every (distance, index) pair
        let mut all: Vec<(f64, usize)> = cols
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let d: f64 = x
                    .iter()
                    .zip(col)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<usize> = all.iter().take(4).map(|&(_, i)| i).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn knn_tie_breaks_to_lower_index() {
        let cols = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 9.0]];
        let base = base_from_columns(&cols);
        assert_eq!(knn(&base, &[0.0, 0.0], 2, None).unwrap(), vec![0, 1]);
    }

    #[test]
    fn knn_k_too_large() {
        let cols = vec![vec![1.0], vec![2.0]];
        let base = base_from_columns(&cols);
        assert!(matches!(
            knn(&base, &[0.0], 2, Some(0)),
            Err(CbmError::KTooLarge { k: 2, available: 1 })
        ));
    }

    // -- local weights -----------------------------------------------------

    #[test]
    fn midpoint_gets_equal_weights() {
        let neighbors = DMatrix::from_columns(&[
            nalgebra::dvector![0.0, 0.0, 1.0],
            nalgebra::dvector![2.0, 2.0, 1.0],
        ]);
        let w = local_weights(&[1.0, 1.0, 1.0], &neighbors, 1e-3).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-10);
        assert!((w[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn single_neighbor_weight_is_one() {
        let neighbors = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let w = local_weights(&[0.0, 0.0], &neighbors, 1e-3).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    /// Oracle: solve the KKT system of `min ||x - N w||^2 + eps ||w||^2`
    /// subject to `sum(w) = 1` directly.
    fn constrained_ls_oracle(x: &[f64], neighbors: &DMatrix<f64>, reg: f64) -> Vec<f64> {
        let k = neighbors.ncols();
        let mut diffs = neighbors.clone();
        for j in 0..k {
            for i in 0..neighbors.nrows() {
                diffs[(i, j)] = x[i] - neighbors[(i, j)];
            }
        }
        let cov = diffs.transpose() * &diffs;
        let trace = cov.trace();
        let eps = reg * if trace > 0.0 { trace / k as f64 } else { 1.0 };

        // KKT: [2(C + eps I), 1; 1^T, 0] [w; lambda] = [0; 1]
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        for i in 0..k {
            for j in 0..k {
                kkt[(i, j)] = 2.0 * cov[(i, j)];
            }
            kkt[(i, i)] += 2.0 * eps;
            kkt[(i, k)] = 1.0;
            kkt[(k, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        let sol = kkt.lu().solve(&rhs).expect("oracle KKT solvable");
        sol.iter().take(k).cloned().collect()
    }

    #[test]
    fn weights_match_constrained_ls_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..40 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let neighbors = DMatrix::from_fn(8, 5, |_, _| rng.random_range(-1.0..1.0));
            let got = local_weights(&x, &neighbors, 1e-3).unwrap();
            let expected = constrained_ls_oracle(&x, &neighbors, 1e-3);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-6, "{g} vs {e}");
            }
            let sum: f64 = got.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn weights_are_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neighbors = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let shift: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x_shifted: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let neighbors_shifted = DMatrix::from_fn(6, 4, |i, j| neighbors[(i, j)] + shift[i]);
        let a = local_weights(&x, &neighbors, 1e-3).unwrap();
        let b = local_weights(&x_shifted, &neighbors_shifted, 1e-3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn unregularized_singular_system_is_an_error() {
        // two identical neighbors away from x: rank-1 covariance, reg = 0
        let neighbors =
            DMatrix::from_columns(&[nalgebra::dvector![1.0, 0.0], nalgebra::dvector![1.0, 0.0]]);
        assert!(matches!(
            local_weights(&[0.0, 0.0], &neighbors, 0.0),
            Err(CbmError::SingularSystem)
        ));
        // the default regularization makes the same instance solvable
        let w = local_weights(&[0.0, 0.0], &neighbors, 1e-3).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coincident_neighbors_fall_back_to_uniform() {
        // x equals both neighbors: zero-trace covariance
        let neighbors =
            DMatrix::from_columns(&[nalgebra::dvector![1.0, 2.0], nalgebra::dvector![1.0, 2.0]]);
        let w = local_weights(&[1.0, 2.0], &neighbors, 1e-3).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    // -- fit ---------------------------------------------------------------

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    #[test]
    fn simplex_fit_has_clean_structure() {
        // unit basis vectors form a regular simplex: all pairwise distances equal
        let base = BaseMatrix::new(DMatrix::identity(6, 6), (0..6).collect()).unwrap();
        let config = LleConfig::new(2, 3);
        let model = fit_lle(&base, &config).unwrap();

        for i in 0..6 {
            let col_sum: f64 = model.weight_matrix().column(i).sum();
            assert!((col_sum - 1.0).abs() < 1e-10);
            assert_eq!(model.neighbor_indices()[i].len(), 2);
            assert!(!model.neighbor_indices()[i].contains(&i));
        }
        let m = model.reconstruction_matrix();
        let ones = DVector::from_element(6, 1.0);
        assert!(max_abs(&DMatrix::from_column_slice(6, 1, (&m * &ones).as_slice())) < 1e-8);
        assert!(max_abs(&(&m - m.transpose())) < 1e-12);
        for (row, &lambda) in model.eigenvalues().iter().enumerate() {
            let v = DVector::from_fn(6, |i, _| model.reduced()[(row, i)]);
            let residual = &m * &v - lambda * &v;
            assert!(residual.amax() <= 1e-8);
        }
    }

    /// Independent eigensolver: cyclic Jacobi rotations on a symmetric matrix.
    fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = a.nrows();
        let mut v = DMatrix::<f64>::identity(n, n);
        for _sweep in 0..200 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(i, q)] = s * aip + c * aiq;
                    }
                    for j in 0..n {
                        let apj = a[(p, j)];
                        let aqj = a[(q, j)];
                        a[(p, j)] = c * apj - s * aqj;
                        a[(q, j)] = s * apj + c * aqj;
                    }
                    for i in 0..n {
                        let vip = v[(i, p)];
                        let viq = v[(i, q)];
                        v[(i, p)] = c * vip - s * viq;
                        v[(i, q)] = s * vip + c * viq;
                    }
                }
            }
        }
        let values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        (values, v)
    }

    #[test]
    fn reduced_rows_match_jacobi_oracle_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let cols = random_columns(&mut rng, 4, 6);
        let base = base_from_columns(&cols);
        let config = LleConfig::new(2, 2);
        let model = fit_lle(&base, &config).unwrap();

        let m = model.reconstruction_matrix();
        let (values, vectors) = jacobi_eigen(m);
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());

        for row in 0..2 {
            let idx = order[row + 1];
            let oracle: Vec<f64> = (0..6).map(|i| vectors[(i, idx)]).collect();
            let got: Vec<f64> = (0..6).map(|i| model.reduced()[(row, i)]).collect();
            let same: f64 = got
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let flipped: f64 = got
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a + b).abs())
                .fold(0.0, f64::max);
            assert!(
                same.min(flipped) < 1e-6,
                "row {row}: same {same}, flipped {flipped}"
            );
            assert!((model.eigenvalues()[row] - values[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn reduced_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let cols = random_columns(&mut rng, 5, 12);
        let base = base_from_columns(&cols);
        let model = fit_lle(&base, &LleConfig::new(4, 5)).unwrap();
        let b = model.reduced();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..12).map(|t| b[(i, t)] * b[(j, t)]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "rows {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let base = base_from_columns(&random_columns(&mut rng, 3, 6));
        assert!(matches!(
            fit_lle(&base, &LleConfig::new(2, 6)),
            Err(CbmError::InvalidConfig(_))
        ));
        assert!(matches!(
            fit_lle(&base, &LleConfig::new(6, 2)),
            Err(CbmError::KTooLarge { .. })
        ));
        assert!(fit_lle(&base, &LleConfig::new(2, 5)).is_ok());
    }

    #[test]
    fn l2_normalization_rescales_columns() {
        let cols = vec![vec![3.0, 4.0], vec![0.0, 2.0], vec![5.0, 0.0]];
        let base = base_from_columns(&cols);
        let mut config = LleConfig::new(1, 1);
        config.l2_normalize = true;
        let model = fit_lle(&base, &config).unwrap();
        for j in 0..3 {
            let norm: f64 = (0..2)
                .map(|i| model.base()[(i, j)] * model.base()[(i, j)])
                .sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    // -- transform ---------------------------------------------------------

    #[test]
    fn transform_midpoint_mixes_reduced_columns() {
        // two far-apart tight pairs; the midpoint of a pair reconstructs from it
        let cols = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![10.0, 10.0],
            vec![10.0, 11.0],
        ];
        let base = base_from_columns(&cols);
        let model = fit_lle(&base, &LleConfig::new(2, 2)).unwrap();
        let out = transform(&[0.5, 0.0], &model).unwrap();
        let expected: Vec<f64> = (0..2)
            .map(|d| 0.5 * model.reduced()[(d, 0)] + 0.5 * model.reduced()[(d, 1)])
            .collect();
        for (g, e) in out.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-8);
        }
    }

    #[test]
    fn transform_with_k1_snaps_to_nearest_reduced_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cols = random_columns(&mut rng, 3, 8);
        let base = base_from_columns(&cols);
        let model = fit_lle(&base, &LleConfig::new(1, 3)).unwrap();
        let x: Vec<f64> = cols[5].iter().map(|v| v + 1e-6).collect();
        let out = transform(&x, &model).unwrap();
        for (d, o) in out.iter().enumerate() {
            assert!((o - model.reduced()[(d, 5)]).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_matches_composition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let cols = random_columns(&mut rng, 6, 10);
        let base = base_from_columns(&cols);
        let model = fit_lle(&base, &LleConfig::new(4, 3)).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = transform(&x, &model).unwrap();

            // oracle: knn by full sort, weights by the KKT oracle, then matvec
            let mut all: Vec<(f64, usize)> = cols
                .iter()
                .enumerate()
                .map(|(i, col)| {
                    let d: f64 = x.iter().zip(col).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, i)
                })
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx: Vec<usize> = all.iter().take(4).map(|&(_, i)| i).collect();
            let neighbors = DMatrix::from_fn(6, 4, |i, j| cols[idx[j]][i]);
            let w = constrained_ls_oracle(&x, &neighbors, model.config().reg);
            let mut expected = vec![0.0; 3];
            for (j, &col) in idx.iter().enumerate() {
                for (d, e) in expected.iter_mut().enumerate() {
                    *e += w[j] * model.reduced()[(d, col)];
                }
            }
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn transform_scales_linearly_with_reduced_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let cols = random_columns(&mut rng, 4, 7);
        let base = base_from_columns(&cols);
        let model = fit_lle(&base, &LleConfig::new(3, 2)).unwrap();
        let mut scaled = model.clone();
        scaled.reduced *= 3.0;
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = transform(&x, &model).unwrap();
        let b = transform(&x, &scaled).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((3.0 * p - q).abs() < 1e-9);
        }
    }

    // -- full pipeline -----------------------------------------------------

    fn random_episode(
        rng: &mut ChaCha8Rng,
        dim: usize,
        n_way: usize,
        k_shot: usize,
        q: usize,
    ) -> Episode {
        let support: Vec<Vec<EmbeddingVector>> = (0..n_way)
            .map(|_| {
                (0..k_shot)
                    .map(|_| {
                        EmbeddingVector::new(
                            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect();
        let queries: Vec<(EmbeddingVector, usize)> = (0..n_way)
            .flat_map(|slot| {
                (0..q)
                    .map(|_| {
                        (
                            EmbeddingVector::new(
                                (0..dim)
                                    .map(|_| rng.random_range(-1.0..1.0))
                                    .collect::<Vec<_>>(),
                            )
                            .unwrap(),
                            slot,
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Episode::new((0..n_way as u32).collect(), support, queries, q).unwrap()
    }

    #[test]
    fn alpha_one_matches_inductive_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let base = base_from_columns(&random_columns(&mut rng, 5, 9));
        let episode = random_episode(&mut rng, 5, 4, 1, 3);
        let cbm_config = CbmConfig::new(
            Similarity::Cosine,
            true,
            crate::cbm::DistributionSimilarity::Cosine,
            1.0,
        )
        .unwrap();
        let scores = cbm_lle_scores(&episode, &base, &LleConfig::new(3, 4), &cbm_config).unwrap();
        let protos = episode_prototypes(&episode).unwrap();
        for ((q, _), psi) in episode.queries().iter().zip(&scores) {
            let phi = inductive_scores(q, &protos).unwrap();
            assert_eq!(classify(psi).unwrap(), classify(&phi).unwrap());
        }
    }

    #[test]
    fn identity_reduction_double_matches_plain_bi_path() {
        // replacing the embedding with the identity map must reproduce the
        // unreduced scorer exactly
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let base = base_from_columns(&random_columns(&mut rng, 4, 6));
        let episode = random_episode(&mut rng, 4, 3, 2, 2);
        let cbm_config = CbmConfig::new(
            Similarity::Cosine,
            true,
            crate::cbm::DistributionSimilarity::Cosine,
            0.4,
        )
        .unwrap();
        let via_double =
            bi_path_scores_with(&episode, base.matrix(), |v| Ok(v.to_vec()), &cbm_config).unwrap();
        let plain = cbm_scores(&episode, &base, &cbm_config).unwrap();
        assert_eq!(via_double, plain);
    }

    #[test]
    fn scores_match_end_to_end_composition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cols = random_columns(&mut rng, 6, 9);
        let base = base_from_columns(&cols);
        let episode = random_episode(&mut rng, 6, 5, 1, 2);
        let lle_config = LleConfig::new(4, 3);
        let alpha = 0.3;
        let cbm_config = CbmConfig::new(
            Similarity::Cosine,
            true,
            crate::cbm::DistributionSimilarity::Cosine,
            alpha,
        )
        .unwrap();
        let got = cbm_lle_scores(&episode, &base, &lle_config, &cbm_config).unwrap();

        // oracle: fit once, then recompose the pipeline from public pieces
        let model = fit_lle(&base, &lle_config).unwrap();
        let protos = episode_prototypes(&episode).unwrap();
        let reduced_protos: Vec<Vec<f64>> = protos
            .iter()
            .map(|p| transform(p.vector.values(), &model).unwrap())
            .collect();
        let reduced_cols = model.reduced();
        let cosine_to_cols = |v: &[f64]| -> Vec<f64> {
            let raw: Vec<f64> = (0..reduced_cols.ncols())
                .map(|i| {
                    let col: Vec<f64> = (0..reduced_cols.nrows())
                        .map(|d| reduced_cols[(d, i)])
                        .collect();
                    crate::metrics::cosine(v, &col).unwrap()
                })
                .collect();
            crate::metrics::softmax(&raw)
        };
        for ((q, _), psi) in episode.queries().iter().zip(&got) {
            let phi = inductive_scores(q, &protos).unwrap();
            let q_reduced = transform(q.values(), &model).unwrap();
            let rho_q = cosine_to_cols(&q_reduced);
            for slot in 0..episode.n_way() {
                let rho_s = cosine_to_cols(&reduced_protos[slot]);
                let varphi = crate::metrics::cosine(&rho_q, &rho_s).unwrap();
                let expected = alpha * phi[slot] + (1.0 - alpha) * varphi;
                assert!((psi[slot] - expected).abs() < 1e-10);
            }
        }
    }
}

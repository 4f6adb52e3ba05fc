//! Cooperative bi-path scoring: similarity distributions over base classes,
//! a transductive score between those distributions, and the alpha-weighted
//! combination with the inductive cosine score.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::BaseMatrix;
use crate::error::{CbmError, Result};
use crate::inductive::{episode_prototypes, Episode};
use crate::metrics::{cosine, is_normalized, neg_kl, softmax, Similarity};

/// Similarity choices between two distributions over base classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistributionSimilarity {
    #[serde(rename = "cos")]
    Cosine,
    #[serde(rename = "euclid")]
    NegEuclidean,
    #[serde(rename = "kl")]
    NegKl,
}

impl std::fmt::Display for DistributionSimilarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistributionSimilarity::Cosine => write!(f, "cos"),
            DistributionSimilarity::NegEuclidean => write!(f, "euclid"),
            DistributionSimilarity::NegKl => write!(f, "kl"),
        }
    }
}

/// Variant selector for the bi-path metric: the kernel producing per-base
/// similarities (`sigma_prime`), optional softmax normalization, the kernel
/// comparing the resulting distributions (`sigma`), and the inductive weight
/// `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbmConfig {
    sigma_prime: Similarity,
    apply_softmax: bool,
    sigma: DistributionSimilarity,
    alpha: f64,
}

impl CbmConfig {
    /// Rejects KL without softmax (KL needs probability vectors) and alpha
    /// outside `[0, 1]`.
    pub fn new(
        sigma_prime: Similarity,
        apply_softmax: bool,
        sigma: DistributionSimilarity,
        alpha: f64,
    ) -> Result<Self> {
        if sigma == DistributionSimilarity::NegKl && !apply_softmax {
            return Err(CbmError::InvalidConfig(
                "sigma = kl requires softmax normalization".into(),
            ));
        }
        if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
            return Err(CbmError::AlphaOutOfRange(alpha));
        }
        Ok(Self {
            sigma_prime,
            apply_softmax,
            sigma,
            alpha,
        })
    }

    pub fn sigma_prime(&self) -> Similarity {
        self.sigma_prime
    }

    pub fn apply_softmax(&self) -> bool {
        self.apply_softmax
    }

    pub fn sigma(&self) -> DistributionSimilarity {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.sigma_prime, self.apply_softmax, self.sigma, alpha)
    }
}

impl Default for CbmConfig {
    /// Cosine kernels with softmax on both distributions and a small
    /// inductive weight, the strongest one-shot operating point.
    fn default() -> Self {
        Self {
            sigma_prime: Similarity::Cosine,
            apply_softmax: true,
            sigma: DistributionSimilarity::Cosine,
            alpha: 0.05,
        }
    }
}

/// A vector of similarities between one embedding and every base class,
/// optionally softmax-normalized into a probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDistribution {
    rho: Vec<f64>,
    normalized: bool,
}

impl SimilarityDistribution {
    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Similarity of `v` against every column of `columns` (column-major matrix),
/// softmax-normalized when the config asks for it.
pub(crate) fn distribution_over_columns(
    v: &[f64],
    columns: &DMatrix<f64>,
    config: &CbmConfig,
) -> Result<SimilarityDistribution> {
    if v.len() != columns.nrows() {
        return Err(CbmError::DimensionMismatch {
            expected: columns.nrows(),
            actual: v.len(),
        });
    }
    let c = columns.nrows();
    let data = columns.as_slice();
    let mut rho = Vec::with_capacity(columns.ncols());
    for i in 0..columns.ncols() {
        rho.push(config.sigma_prime().eval(v, &data[i * c..(i + 1) * c])?);
    }
    if config.apply_softmax() {
        rho = softmax(&rho);
    }
    Ok(SimilarityDistribution {
        rho,
        normalized: config.apply_softmax(),
    })
}

/// The similarity distribution of an embedding over the base classes.
pub fn similarity_distribution(
    v: &[f64],
    base: &BaseMatrix,
    config: &CbmConfig,
) -> Result<SimilarityDistribution> {
    distribution_over_columns(v, base.matrix(), config)
}

/// Transductive similarity between a query distribution and a support
/// distribution, using the configured `sigma`.
pub fn transductive_score(
    rho_query: &SimilarityDistribution,
    rho_support: &SimilarityDistribution,
    config: &CbmConfig,
) -> Result<f64> {
    match config.sigma() {
        DistributionSimilarity::Cosine => cosine(rho_query.values(), rho_support.values()),
        DistributionSimilarity::NegEuclidean => {
            crate::metrics::neg_euclidean(rho_query.values(), rho_support.values())
        }
        DistributionSimilarity::NegKl => {
            for rho in [rho_query, rho_support] {
                if !rho.is_normalized() || !is_normalized(rho.values()) {
                    return Err(CbmError::NotNormalized(rho.values().iter().sum()));
                }
            }
            neg_kl(rho_query.values(), rho_support.values())
        }
    }
}

/// Affine combination `alpha * inductive + (1 - alpha) * transductive`,
/// with no rescaling of either term.
pub fn combined_score(inductive: f64, transductive: f64, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(CbmError::AlphaOutOfRange(alpha));
    }
    Ok(alpha * inductive + (1.0 - alpha) * transductive)
}

pub(crate) struct BiPathScorer<'a> {
    columns: &'a DMatrix<f64>,
    config: &'a CbmConfig,
    support_distributions: Vec<SimilarityDistribution>,
}

impl<'a> BiPathScorer<'a> {
    /// `reduced_prototypes[n]` is what enters the transductive path for slot
    /// `n`; the caller decides whether that is the raw prototype or its
    /// dimensionality-reduced image.
    pub(crate) fn new(
        columns: &'a DMatrix<f64>,
        config: &'a CbmConfig,
        reduced_prototypes: &[Vec<f64>],
    ) -> Result<Self> {
        let support_distributions = reduced_prototypes
            .iter()
            .map(|p| distribution_over_columns(p, columns, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns,
            config,
            support_distributions,
        })
    }

    /// Per-slot combined scores for one query, given the inductive scores and
    /// the query vector as seen by the transductive path.
    pub(crate) fn score_query(
        &self,
        transductive_input: &[f64],
        inductive: &[f64],
    ) -> Result<Vec<f64>> {
        let rho_query = distribution_over_columns(transductive_input, self.columns, self.config)?;
        inductive
            .iter()
            .zip(&self.support_distributions)
            .map(|(&phi, rho_support)| {
                let varphi = transductive_score(&rho_query, rho_support, self.config)?;
                combined_score(phi, varphi, self.config.alpha())
            })
            .collect()
    }
}

/// Bi-path scores where `map` decides how query and prototype vectors enter
/// the transductive path (identity for the plain metric, a dimensionality
/// reduction for the LLE variant); the inductive path always uses the raw
/// vectors.
pub(crate) fn bi_path_scores_with(
    episode: &Episode,
    columns: &DMatrix<f64>,
    mut map: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    config: &CbmConfig,
) -> Result<Vec<Vec<f64>>> {
    let prototypes = episode_prototypes(episode)?;
    let mapped_prototypes: Vec<Vec<f64>> = prototypes
        .iter()
        .map(|p| map(p.vector.values()))
        .collect::<Result<Vec<_>>>()?;
    let scorer = BiPathScorer::new(columns, config, &mapped_prototypes)?;
    episode
        .queries()
        .iter()
        .map(|(q, _)| {
            let inductive = crate::inductive::inductive_scores(q, &prototypes)?;
            let mapped = map(q.values())?;
            scorer.score_query(&mapped, &inductive)
        })
        .collect()
}

/// Combined bi-path scores for every query of an episode, in query order.
pub fn cbm_scores(
    episode: &Episode,
    base: &BaseMatrix,
    config: &CbmConfig,
) -> Result<Vec<Vec<f64>>> {
    if episode.dim() != base.dim() {
        return Err(CbmError::DimensionMismatch {
            expected: base.dim(),
            actual: episode.dim(),
        });
    }
    bi_path_scores_with(episode, base.matrix(), |v| Ok(v.to_vec()), config)
}

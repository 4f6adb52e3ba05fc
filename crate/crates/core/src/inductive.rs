//! The inductive baseline: class prototypes from support sets and cosine
//! scores for queries.

use crate::embedding::{two_pass_mean, EmbeddingVector};
use crate::error::{CbmError, Result};
use crate::metrics::cosine;

/// One N-way K-shot task: a labeled support grid and a query list. Class
/// "slots" index positions within the episode; `class_ids` maps slots back to
/// dataset classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    class_ids: Vec<u32>,
    support: Vec<Vec<EmbeddingVector>>,
    queries: Vec<(EmbeddingVector, usize)>,
}

impl Episode {
    pub fn new(
        class_ids: Vec<u32>,
        support: Vec<Vec<EmbeddingVector>>,
        queries: Vec<(EmbeddingVector, usize)>,
        n_query: usize,
    ) -> Result<Self> {
        let n_way = class_ids.len();
        if n_way == 0 || support.len() != n_way {
            return Err(CbmError::InvalidConfig(
                "support grid must have one row per class slot".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if !class_ids.iter().all(|id| seen.insert(*id)) {
            return Err(CbmError::InvalidConfig(
                "episode class ids must be distinct".into(),
            ));
        }
        let k_shot = support[0].len();
        if k_shot == 0 || support.iter().any(|row| row.len() != k_shot) {
            return Err(CbmError::EmptySupport);
        }
        let dim = support[0][0].len();
        for row in &support {
            for v in row {
                if v.len() != dim {
                    return Err(CbmError::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
            }
        }
        for (v, slot) in &queries {
            if v.len() != dim {
                return Err(CbmError::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if *slot >= n_way {
                return Err(CbmError::InvalidConfig(format!(
                    "query slot {slot} out of range for {n_way}-way episode"
                )));
            }
        }
        Ok(Self {
            n_way,
            k_shot,
            n_query,
            class_ids,
            support,
            queries,
        })
    }

    pub fn n_way(&self) -> usize {
        self.n_way
    }

    pub fn k_shot(&self) -> usize {
        self.k_shot
    }

    /// Queries per class.
    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn dim(&self) -> usize {
        self.support[0][0].len()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    /// Support vectors for one class slot.
    pub fn support(&self, slot: usize) -> &[EmbeddingVector] {
        &self.support[slot]
    }

    /// `(vector, true slot)` pairs.
    pub fn queries(&self) -> &[(EmbeddingVector, usize)] {
        &self.queries
    }
}

/// Mean pooled support vector of one class slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub slot: usize,
    pub vector: EmbeddingVector,
}

/// Arithmetic mean of a class's support vectors.
pub fn class_prototype(support: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    if support.is_empty() {
        return Err(CbmError::EmptySupport);
    }
    EmbeddingVector::new(two_pass_mean(support))
}

/// Prototypes for every slot of an episode, in slot order.
pub fn episode_prototypes(episode: &Episode) -> Result<Vec<Prototype>> {
    (0..episode.n_way())
        .map(|slot| {
            Ok(Prototype {
                slot,
                vector: class_prototype(episode.support(slot))?,
            })
        })
        .collect()
}

/// Cosine similarity between a query and every prototype, in slot order.
pub fn inductive_scores(query: &EmbeddingVector, prototypes: &[Prototype]) -> Result<Vec<f64>> {
    prototypes
        .iter()
        .map(|p| cosine(query.values(), p.vector.values()))
        .collect()
}

/// Index of the maximum score; ties resolve to the lowest slot.
pub fn classify(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(CbmError::EmptyScores);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

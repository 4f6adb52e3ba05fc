//! Similarity and divergence kernels, plus the dense classification loss.
//!
//! Everything here is a pure function; larger output always means "more
//! similar". Euclidean distance enters negated, KL divergence enters negated,
//! and the zero vector is an error for cosine rather than a silent 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::FeatureMap;
use crate::error::{CbmError, Result};

/// Tolerance used to decide whether a vector is a probability distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Floor applied to probability components inside the KL sum.
pub const KL_EPSILON: f64 = 1e-12;

/// Vector-level similarity kernel choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[serde(rename = "cos")]
    Cosine,
    #[serde(rename = "euclid")]
    NegEuclidean,
}

impl Similarity {
    pub fn eval(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Similarity::Cosine => cosine(a, b),
            Similarity::NegEuclidean => neg_euclidean(a, b),
        }
    }
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Similarity::Cosine => write!(f, "cos"),
            Similarity::NegEuclidean => write!(f, "euclid"),
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CbmError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Cosine similarity, clamped into `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CbmError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Negative Euclidean distance; 0 iff the vectors are equal.
pub fn neg_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sq += d * d;
    }
    Ok(-sq.sqrt())
}

/// Max-subtracted softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn is_normalized(v: &[f64]) -> bool {
    let sum: f64 = v.iter().sum();
    (sum - 1.0).abs() <= NORMALIZATION_TOLERANCE && v.iter().all(|&x| x >= 0.0)
}

/// Negative KL divergence `-KL(p || q)` over two probability vectors.
/// Components below [`KL_EPSILON`] are clamped up before the sum.
pub fn neg_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    for v in [p, q] {
        if !is_normalized(v) {
            return Err(CbmError::NotNormalized(v.iter().sum()));
        }
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let pi = pi.max(KL_EPSILON);
        let qi = qi.max(KL_EPSILON);
        kl += pi * (pi / qi).ln();
    }
    Ok(-kl)
}

/// Inputs to the dense classification loss: a feature map classified at every
/// spatial position through a linear head with temperature-scaled logits.
#[derive(Debug, Clone)]
pub struct LossInputs<'a> {
    pub feature_map: &'a FeatureMap,
    /// `c x n_classes` weight matrix; column `j` scores class `j`.
    pub weights: &'a DMatrix<f64>,
    pub bias: &'a DVector<f64>,
    pub true_class: usize,
    pub temperature: f64,
}

/// Mean over spatial positions of the cross-entropy of temperature-scaled
/// linear logits.
pub fn dense_classification_loss(inputs: &LossInputs) -> Result<f64> {
    let map = inputs.feature_map;
    let c = map.channels();
    let n_classes = inputs.weights.ncols();
    if inputs.weights.nrows() != c {
        return Err(CbmError::DimensionMismatch {
            expected: c,
            actual: inputs.weights.nrows(),
        });
    }
    if inputs.bias.len() != n_classes {
        return Err(CbmError::DimensionMismatch {
            expected: n_classes,
            actual: inputs.bias.len(),
        });
    }
    if inputs.true_class >= n_classes {
        return Err(CbmError::InvalidConfig(format!(
            "true class {} out of range for {} classes",
            inputs.true_class, n_classes
        )));
    }
    if !(inputs.temperature.is_finite() && inputs.temperature > 0.0) {
        return Err(CbmError::InvalidConfig(format!(
            "temperature must be positive, got {}",
            inputs.temperature
        )));
    }

    let t = inputs.temperature;
    let r = map.positions();
    let mut total = 0.0;
    let mut logits = vec![0.0; n_classes];
    for pos in 0..r {
        for (j, logit) in logits.iter_mut().enumerate() {
            let mut dot = 0.0;
            for row in 0..c {
                dot += map.data()[(row, pos)] * inputs.weights[(row, j)];
            }
            *logit = t * (dot + inputs.bias[j]);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - logits[inputs.true_class];
    }
    Ok(total / r as f64)
}

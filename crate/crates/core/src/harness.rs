//! Episodic evaluation: seeded task sampling, accuracy with a 95% confidence
//! interval over per-task accuracies, and paired hyperparameter sweeps.
//!
//! Every task draws its randomness from a counter-based stream keyed on
//! `(seed, task_index)`, so results are bit-identical no matter how tasks are
//! scheduled across threads, and every sweep point sees byte-identical
//! episodes.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbm::{cbm_scores, CbmConfig, DistributionSimilarity};
use crate::embedding::{BaseMatrix, EmbeddingDataset};
use crate::error::{CbmError, Result};
use crate::inductive::{classify, episode_prototypes, inductive_scores, Episode};
use crate::lle::{cbm_lle_scores_with_model, fit_lle, LleConfig, LleModel};
use crate::metrics::Similarity;

/// Episode sampling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_way: usize,
    pub k_shot: usize,
    /// Queries per class.
    pub n_query: usize,
    pub n_tasks: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self, novel: &EmbeddingDataset) -> Result<()> {
        if self.n_way < 2 {
            return Err(CbmError::InvalidConfig("n_way must be at least 2".into()));
        }
        if self.k_shot == 0 || self.n_query == 0 || self.n_tasks == 0 {
            return Err(CbmError::InvalidConfig(
                "k_shot, n_query, and n_tasks must be positive".into(),
            ));
        }
        if self.n_way > novel.n_classes() {
            return Err(CbmError::InsufficientSamples(format!(
                "{}-way task needs {} novel classes, dataset has {}",
                self.n_way,
                self.n_way,
                novel.n_classes()
            )));
        }
        let needed = self.k_shot + self.n_query;
        if needed > novel.min_class_size() {
            return Err(CbmError::InsufficientSamples(format!(
                "need {} samples per class, smallest class has {}",
                needed,
                novel.min_class_size()
            )));
        }
        Ok(())
    }
}

/// Classification method under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Inductive,
    Cbm(CbmConfig),
    CbmLle(LleConfig, CbmConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Inductive => "inductive",
            Method::Cbm(_) => "cbm",
            Method::CbmLle(_, _) => "cbm-lle",
        }
    }

    /// Configuration echo for reports.
    pub fn config_value(&self) -> serde_json::Value {
        match self {
            Method::Inductive => serde_json::json!({}),
            Method::Cbm(cbm) => serde_json::to_value(cbm).expect("serializable config"),
            Method::CbmLle(lle, cbm) => {
                let mut v = serde_json::to_value(cbm).expect("serializable config");
                v["lle"] = serde_json::to_value(lle).expect("serializable config");
                v
            }
        }
    }
}

/// Evaluation result. `ci95` is `1.96 * s / sqrt(n_tasks)` where `s` is the
/// sample standard deviation of the per-task accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub config: serde_json::Value,
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
    pub n_tasks: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub ci95: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_task: Option<Vec<f64>>,
    pub elapsed_seconds: f64,
}

/// First `take` entries of a seeded Fisher-Yates pass over `0..n`.
fn partial_shuffle(rng: &mut ChaCha8Rng, n: usize, take: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..take {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(take);
    indices
}

/// Sample the episode for one task. A pure function of
/// `(dataset, cfg.seed, task_index)`: the task index selects an independent
/// RNG stream, so tasks can be generated in any order or in parallel.
pub fn sample_episode(
    novel: &EmbeddingDataset,
    cfg: &ProtocolConfig,
    task_index: u64,
) -> Result<Episode> {
    cfg.validate(novel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(task_index);

    let class_positions = partial_shuffle(&mut rng, novel.n_classes(), cfg.n_way);
    let mut class_ids = Vec::with_capacity(cfg.n_way);
    let mut support = Vec::with_capacity(cfg.n_way);
    let mut queries = Vec::with_capacity(cfg.n_way * cfg.n_query);
    for (slot, &pos) in class_positions.iter().enumerate() {
        let class = &novel.classes()[pos];
        let needed = cfg.k_shot + cfg.n_query;
        if class.vectors.len() < needed {
            return Err(CbmError::InsufficientSamples(format!(
                "class {} has {} samples, task needs {}",
                class.class_id,
                class.vectors.len(),
                needed
            )));
        }
        let picks = partial_shuffle(&mut rng, class.vectors.len(), needed);
        class_ids.push(class.class_id);
        support.push(
            picks[..cfg.k_shot]
                .iter()
                .map(|&i| class.vectors[i].clone())
                .collect::<Vec<_>>(),
        );
        for &i in &picks[cfg.k_shot..] {
            queries.push((class.vectors[i].clone(), slot));
        }
    }
    Episode::new(class_ids, support, queries, cfg.n_query)
}

enum PreparedMethod<'a> {
    Inductive,
    Cbm(&'a CbmConfig),
    CbmLle(LleModel, &'a CbmConfig),
}

impl<'a> PreparedMethod<'a> {
    fn new(base: &BaseMatrix, method: &'a Method) -> Result<Self> {
        match method {
            Method::Inductive => Ok(PreparedMethod::Inductive),
            Method::Cbm(cbm) => Ok(PreparedMethod::Cbm(cbm)),
            Method::CbmLle(lle, cbm) => Ok(PreparedMethod::CbmLle(fit_lle(base, lle)?, cbm)),
        }
    }

    fn predict(&self, episode: &Episode, base: &BaseMatrix) -> Result<Vec<usize>> {
        let scores: Vec<Vec<f64>> = match self {
            PreparedMethod::Inductive => {
                let prototypes = episode_prototypes(episode)?;
                episode
                    .queries()
                    .iter()
                    .map(|(q, _)| inductive_scores(q, &prototypes))
                    .collect::<Result<_>>()?
            }
            PreparedMethod::Cbm(cbm) => cbm_scores(episode, base, cbm)?,
            PreparedMethod::CbmLle(model, cbm) => cbm_lle_scores_with_model(episode, model, cbm)?,
        };
        scores.iter().map(|s| classify(s)).collect()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `1.96 * s / sqrt(n)` with the sample standard deviation; 0 for n < 2.
pub fn ci95_half_width(per_task: &[f64]) -> f64 {
    let n = per_task.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(per_task);
    let var = per_task.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n as f64 - 1.0);
    1.96 * var.sqrt() / (n as f64).sqrt()
}

/// Run the full protocol: `n_tasks` episodes, every query classified, per-task
/// accuracies aggregated into a mean and 95% CI. Tasks execute on the current
/// rayon pool; the outcome does not depend on thread count.
pub fn evaluate(
    novel: &EmbeddingDataset,
    base: &BaseMatrix,
    method: &Method,
    cfg: &ProtocolConfig,
) -> Result<Report> {
    cfg.validate(novel)?;
    if novel.dim() != base.dim() {
        return Err(CbmError::DimensionMismatch {
            expected: base.dim(),
            actual: novel.dim(),
        });
    }
    let prepared = PreparedMethod::new(base, method)?;
    let start = Instant::now();
    let per_task: Vec<f64> = (0..cfg.n_tasks as u64)
        .into_par_iter()
        .map(|task_index| {
            let episode = sample_episode(novel, cfg, task_index)?;
            let predictions = prepared.predict(&episode, base)?;
            let correct = predictions
                .iter()
                .zip(episode.queries())
                .filter(|(p, (_, truth))| *p == truth)
                .count();
            Ok(correct as f64 / episode.queries().len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    Ok(Report {
        method: method.name().to_string(),
        config: method.config_value(),
        n_way: cfg.n_way,
        k_shot: cfg.k_shot,
        n_query: cfg.n_query,
        n_tasks: cfg.n_tasks,
        seed: cfg.seed,
        accuracy: mean(&per_task),
        ci95: ci95_half_width(&per_task),
        per_task: Some(per_task),
        elapsed_seconds: elapsed,
    })
}

/// Which method family a sweep enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethodKind {
    Cbm,
    CbmLle,
}

/// Grid of configurations evaluated on a shared episode set.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub kind: SweepMethodKind,
    /// `(sigma_prime, softmax, sigma)` triples.
    pub variants: Vec<(Similarity, bool, DistributionSimilarity)>,
    pub alphas: Vec<f64>,
    /// Neighbor counts (cbm-lle only).
    pub lle_ks: Vec<usize>,
    /// Reduced dimensions (cbm-lle only).
    pub lle_dims: Vec<usize>,
    /// Normalization flags (cbm-lle only).
    pub lle_l2: Vec<bool>,
    pub lle_reg: f64,
}

impl SweepGrid {
    /// Every valid `(sigma_prime, softmax, sigma)` combination: KL appears
    /// only under softmax, giving 10 variants.
    pub fn all_variants() -> Vec<(Similarity, bool, DistributionSimilarity)> {
        let mut variants = Vec::new();
        for sigma_prime in [Similarity::Cosine, Similarity::NegEuclidean] {
            for apply_softmax in [false, true] {
                let sigmas: &[DistributionSimilarity] = if apply_softmax {
                    &[
                        DistributionSimilarity::Cosine,
                        DistributionSimilarity::NegEuclidean,
                        DistributionSimilarity::NegKl,
                    ]
                } else {
                    &[
                        DistributionSimilarity::Cosine,
                        DistributionSimilarity::NegEuclidean,
                    ]
                };
                for &sigma in sigmas {
                    variants.push((sigma_prime, apply_softmax, sigma));
                }
            }
        }
        variants
    }

    /// Alpha steps `0.00, 0.05, ..., 1.00`.
    pub fn default_alphas() -> Vec<f64> {
        (0..=20).map(|i| i as f64 / 20.0).collect()
    }

    /// A cbm grid over one variant set and an alpha range.
    pub fn cbm(
        variants: Vec<(Similarity, bool, DistributionSimilarity)>,
        alphas: Vec<f64>,
    ) -> Self {
        Self {
            kind: SweepMethodKind::Cbm,
            variants,
            alphas,
            lle_ks: Vec::new(),
            lle_dims: Vec::new(),
            lle_l2: Vec::new(),
            lle_reg: crate::lle::DEFAULT_LLE_REG,
        }
    }

    /// Materialize every grid point, in grid order: variant, then (for
    /// cbm-lle) normalization flag, k, reduced dimension, then alpha.
    pub fn expand(&self) -> Result<Vec<Method>> {
        if self.variants.is_empty() || self.alphas.is_empty() {
            return Err(CbmError::InvalidConfig("sweep grid is empty".into()));
        }
        let mut points = Vec::new();
        for &(sigma_prime, apply_softmax, sigma) in &self.variants {
            match self.kind {
                SweepMethodKind::Cbm => {
                    for &alpha in &self.alphas {
                        points.push(Method::Cbm(CbmConfig::new(
                            sigma_prime,
                            apply_softmax,
                            sigma,
                            alpha,
                        )?));
                    }
                }
                SweepMethodKind::CbmLle => {
                    if self.lle_ks.is_empty() || self.lle_dims.is_empty() || self.lle_l2.is_empty()
                    {
                        return Err(CbmError::InvalidConfig(
                            "cbm-lle sweep needs k, dimension, and normalization values".into(),
                        ));
                    }
                    for &l2 in &self.lle_l2 {
                        for &k in &self.lle_ks {
                            for &c_prime in &self.lle_dims {
                                for &alpha in &self.alphas {
                                    let lle = LleConfig {
                                        k,
                                        c_prime,
                                        l2_normalize: l2,
                                        reg: self.lle_reg,
                                    };
                                    points.push(Method::CbmLle(
                                        lle,
                                        CbmConfig::new(sigma_prime, apply_softmax, sigma, alpha)?,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(points)
    }
}

/// Evaluate every grid point on the shared episode set (identical seed, hence
/// identical tasks) and rank by accuracy, ties resolving to earlier grid
/// order. The first entry is the best configuration.
pub fn sweep(
    novel: &EmbeddingDataset,
    base: &BaseMatrix,
    grid: &SweepGrid,
    cfg: &ProtocolConfig,
) -> Result<Vec<(Method, Report)>> {
    let points = grid.expand()?;
    let mut results = Vec::with_capacity(points.len());
    for method in points {
        let report = evaluate(novel, base, &method, cfg)?;
        results.push((method, report));
    }
    results.sort_by(|a, b| b.1.accuracy.partial_cmp(&a.1.accuracy).unwrap());
    Ok(results)
}

/// Render ranked sweep results as CSV, one row per grid point.
pub fn sweep_csv(results: &[(Method, Report)]) -> String {
    let mut out = String::from(
        "rank,method,sigma_prime,softmax,sigma,alpha,l2_normalize,lle_k,lle_dim,lle_reg,accuracy,ci95,elapsed_seconds\n",
    );
    for (rank, (method, report)) in results.iter().enumerate() {
        let (cbm, lle) = match method {
            Method::Inductive => (None, None),
            Method::Cbm(cbm) => (Some(cbm), None),
            Method::CbmLle(lle, cbm) => (Some(cbm), Some(lle)),
        };
        let (sigma_prime, softmax, sigma, alpha) = match cbm {
            Some(c) => (
                c.sigma_prime().to_string(),
                c.apply_softmax().to_string(),
                c.sigma().to_string(),
                c.alpha().to_string(),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let (l2, k, dim, reg) = match lle {
            Some(l) => (
                l.l2_normalize.to_string(),
                l.k.to_string(),
                l.c_prime.to_string(),
                l.reg.to_string(),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            method.name(),
            sigma_prime,
            softmax,
            sigma,
            alpha,
            l2,
            k,
            dim,
            reg,
            report.accuracy,
            report.ci95,
            report.elapsed_seconds,
        ));
    }
    out
}

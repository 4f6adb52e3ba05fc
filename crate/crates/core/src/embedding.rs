//! Embedding containers: feature maps, pooled vectors, labeled datasets, and
//! the per-class mean matrix used as the transductive agent set.
//!
//! Vector payloads are binary32 in files and widened to `f64` for every
//! computation; means are accumulated with a two-pass correction so large
//! classes (hundreds of samples) do not drift.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CbmError, Result};

/// Dataset role tag. Base classes feed the agent matrix; novel classes are
/// what episodes are sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Base,
    Novel,
}

impl Role {
    pub fn as_u8(self) -> u8 {
        match self {
            Role::Base => 0,
            Role::Novel => 1,
        }
    }

    pub fn from_u8(byte: u8) -> Option<Role> {
        match byte {
            0 => Some(Role::Base),
            1 => Some(Role::Novel),
            _ => None,
        }
    }
}

/// A pooled embedding vector. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CbmError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(CbmError::NonFinite("embedding vector"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A `channels x positions` grid of local feature vectors; column `i` is the
/// local vector at spatial position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(CbmError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CbmError::NonFinite("feature map"));
        }
        Ok(Self { data })
    }

    /// Channel count `c` (rows).
    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Spatial resolution `r` (columns).
    pub fn positions(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Global average pooling: the mean of the map's local vectors.
pub fn gap(map: &FeatureMap) -> EmbeddingVector {
    let c = map.channels();
    let r = map.positions();
    let mut acc = vec![0.0; c];
    for col in map.data.column_iter() {
        for (a, v) in acc.iter_mut().zip(col.iter()) {
            *a += v;
        }
    }
    let inv = 1.0 / r as f64;
    for v in &mut acc {
        *v *= inv;
    }
    EmbeddingVector { values: acc }
}

/// All samples of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGroup {
    pub class_id: u32,
    pub label: Option<String>,
    pub vectors: Vec<EmbeddingVector>,
}

impl ClassGroup {
    pub fn new(class_id: u32, label: Option<String>, vectors: Vec<EmbeddingVector>) -> Self {
        Self {
            class_id,
            label,
            vectors,
        }
    }
}

/// Labeled pooled vectors grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    role: Role,
    classes: Vec<ClassGroup>,
}

impl EmbeddingDataset {
    /// Validates the grouping invariants: unique class ids, no empty class,
    /// every vector of length `dim`.
    pub fn new(dim: usize, role: Role, classes: Vec<ClassGroup>) -> Result<Self> {
        if dim == 0 {
            return Err(CbmError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for class in &classes {
            if !seen.insert(class.class_id) {
                return Err(CbmError::DuplicateClassId(class.class_id));
            }
            if class.vectors.is_empty() {
                return Err(CbmError::EmptyClass(class.class_id));
            }
            for v in &class.vectors {
                if v.len() != dim {
                    return Err(CbmError::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
            }
        }
        Ok(Self { dim, role, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn classes(&self) -> &[ClassGroup] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Smallest per-class sample count.
    pub fn min_class_size(&self) -> usize {
        self.classes
            .iter()
            .map(|c| c.vectors.len())
            .min()
            .unwrap_or(0)
    }

    /// New dataset keeping only the classes at the given positions
    /// (dataset order). Useful for carving validation/test splits.
    pub fn select_classes(&self, positions: &[usize]) -> Result<EmbeddingDataset> {
        let classes = positions
            .iter()
            .map(|&p| {
                self.classes.get(p).cloned().ok_or_else(|| {
                    CbmError::InvalidConfig(format!("class position {p} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddingDataset::new(self.dim, self.role, classes)
    }
}

/// The `c x |C_base|` matrix of per-class mean vectors; column order follows
/// the dataset's class order.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMatrix {
    matrix: DMatrix<f64>,
    class_ids: Vec<u32>,
}

impl BaseMatrix {
    pub fn new(matrix: DMatrix<f64>, class_ids: Vec<u32>) -> Result<Self> {
        if matrix.ncols() < 2 {
            return Err(CbmError::InvalidConfig(format!(
                "base matrix needs at least 2 classes, got {}",
                matrix.ncols()
            )));
        }
        if matrix.ncols() != class_ids.len() {
            return Err(CbmError::DimensionMismatch {
                expected: matrix.ncols(),
                actual: class_ids.len(),
            });
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(CbmError::NonFinite("base matrix"));
        }
        Ok(Self { matrix, class_ids })
    }

    /// Embedding dimension `c`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Column `i` as a contiguous slice (column-major storage).
    pub fn column(&self, i: usize) -> &[f64] {
        let c = self.matrix.nrows();
        &self.matrix.as_slice()[i * c..(i + 1) * c]
    }
}

/// Two-pass mean: plain accumulation followed by a residual correction pass.
pub(crate) fn two_pass_mean(vectors: &[EmbeddingVector]) -> Vec<f64> {
    let n = vectors.len();
    let dim = vectors[0].len();
    let inv = 1.0 / n as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m *= inv;
    }
    let mut residual = vec![0.0; dim];
    for v in vectors {
        for ((r, x), m) in residual.iter_mut().zip(v.values()).zip(&mean) {
            *r += x - m;
        }
    }
    for (m, r) in mean.iter_mut().zip(&residual) {
        *m += r * inv;
    }
    mean
}

/// Per-class mean vectors of a base-role dataset, packed column-wise.
pub fn build_base_matrix(dataset: &EmbeddingDataset) -> Result<BaseMatrix> {
    if dataset.role() != Role::Base {
        return Err(CbmError::RoleMismatch {
            expected: Role::Base,
            actual: dataset.role(),
        });
    }
    let dim = dataset.dim();
    let n = dataset.n_classes();
    let mut matrix = DMatrix::zeros(dim, n);
    let mut class_ids = Vec::with_capacity(n);
    for (col, class) in dataset.classes().iter().enumerate() {
        // EmbeddingDataset::new already rejects empty classes; keep the
        // explicit check so a hand-built dataset cannot slip through.
        if class.vectors.is_empty() {
            return Err(CbmError::EmptyClass(class.class_id));
        }
        let mean = two_pass_mean(&class.vectors);
        for (row, v) in mean.iter().enumerate() {
            matrix[(row, col)] = *v;
        }
        class_ids.push(class.class_id);
    }
    BaseMatrix::new(matrix, class_ids)
}

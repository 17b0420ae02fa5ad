//! Object-to-action affinity: cosine similarity between each object's
//! definition embedding and each action's class embedding, with optional
//! per-action top-T pruning.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{load_matrix, save_matrix, write_atomic, EmbeddingMatrix};
use crate::store::{ActionVocabulary, ObjectVocabulary};
use crate::topk::{check_t, top_t_mask};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRows {
    pub matrix: EmbeddingMatrix,
    /// Rows that were all zero and were left as zero.
    pub zero_rows: Vec<usize>,
}

/// Scales every row to unit Euclidean norm. All-zero rows stay zero and are
/// listed in `zero_rows`.
pub fn normalize_rows(m: &EmbeddingMatrix) -> NormalizedRows {
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    let mut zero_rows = Vec::new();
    for (i, row) in m.iter_rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
            data.extend_from_slice(row);
        } else {
            data.extend(row.iter().map(|v| v / norm));
        }
    }
    NormalizedRows {
        matrix: EmbeddingMatrix::new(m.rows(), m.cols(), data).expect("shape preserved"),
        zero_rows,
    }
}

/// `m x n` matrix of affinities `g[y][z]`, row-major by object.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    objects: usize,
    actions: usize,
    values: Vec<f64>,
    /// Entries still eligible for selection. Pruned entries are zero and
    /// never come back, which keeps repeated pruning idempotent even when
    /// kept affinities are negative.
    support: Vec<bool>,
    pub sparsity_t: Option<usize>,
    pub normalized: bool,
    pub object_labels: Vec<String>,
    pub action_labels: Vec<String>,
}

impl AffinityMatrix {
    pub fn from_values(
        objects: usize,
        actions: usize,
        values: Vec<f64>,
        object_labels: Vec<String>,
        action_labels: Vec<String>,
    ) -> Result<Self> {
        if objects == 0 || actions == 0 {
            return Err(Error::invalid("affinity matrix needs at least one object and action"));
        }
        if values.len() != objects * actions {
            return Err(Error::mismatch("affinity values", objects * actions, values.len()));
        }
        if object_labels.len() != objects {
            return Err(Error::mismatch("affinity object labels", objects, object_labels.len()));
        }
        if action_labels.len() != actions {
            return Err(Error::mismatch("affinity action labels", actions, action_labels.len()));
        }
        Ok(Self {
            objects,
            actions,
            support: vec![true; values.len()],
            values,
            sparsity_t: None,
            normalized: false,
            object_labels,
            action_labels,
        })
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, object: usize, action: usize) -> f64 {
        self.values[object * self.actions + action]
    }

    pub fn row(&self, object: usize) -> &[f64] {
        &self.values[object * self.actions..(object + 1) * self.actions]
    }

    pub fn column(&self, action: usize) -> Vec<f64> {
        (0..self.objects).map(|y| self.get(y, action)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the `t` largest entries of every action column and zeroes the
    /// rest. Survivors keep their values.
    pub fn sparsify(&self, t: usize) -> Result<Self> {
        check_t(t, self.objects, "affinity top objects per action")?;
        let mut out = self.clone();
        for z in 0..self.actions {
            let column = self.column(z);
            let eligible: Vec<bool> = (0..self.objects)
                .map(|y| self.support[y * self.actions + z])
                .collect();
            let keep = top_t_mask(&column, &eligible, t);
            for (y, &k) in keep.iter().enumerate() {
                let i = y * self.actions + z;
                out.support[i] = k;
                if !k {
                    out.values[i] = 0.0;
                }
            }
        }
        out.sparsity_t = Some(self.sparsity_t.map_or(t, |prev| prev.min(t)));
        Ok(out)
    }

    /// Columns for the given actions, in the given order.
    pub fn select_actions(&self, actions: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.objects * actions.len());
        let mut support = Vec::with_capacity(values.capacity());
        for y in 0..self.objects {
            for &z in actions {
                if z >= self.actions {
                    return Err(Error::invalid(format!(
                        "action index {z} out of range for {} actions",
                        self.actions
                    )));
                }
                values.push(self.get(y, z));
                support.push(self.support[y * self.actions + z]);
            }
        }
        Ok(Self {
            objects: self.objects,
            actions: actions.len(),
            values,
            support,
            sparsity_t: self.sparsity_t,
            normalized: self.normalized,
            object_labels: self.object_labels.clone(),
            action_labels: actions.iter().map(|&z| self.action_labels[z].clone()).collect(),
        })
    }

    pub fn nonzero_in_column(&self, action: usize) -> usize {
        (0..self.objects).filter(|&y| self.get(y, action) != 0.0).count()
    }

    pub fn is_supported(&self, object: usize, action: usize) -> bool {
        self.support[object * self.actions + action]
    }

    /// Writes the matrix file at `path` and its metadata at `path` + `.json`.
    pub fn save(&self, path: impl AsRef<Path>, config: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let matrix = EmbeddingMatrix::new(self.objects, self.actions, self.values.clone())?;
        save_matrix(&matrix, path)?;
        let meta = AffinityMeta {
            normalized: self.normalized,
            top: self.sparsity_t,
            objects: self.objects,
            actions: self.actions,
            object_labels: self.object_labels.clone(),
            action_labels: self.action_labels.clone(),
            config,
        };
        let mut json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        json.push(b'\n');
        write_atomic(&metadata_path(path), &json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let matrix = load_matrix(path)?;
        let meta_path = metadata_path(path);
        let text = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: AffinityMeta = serde_json::from_slice(&text).map_err(|source| Error::Json {
            path: meta_path.clone(),
            source,
        })?;
        if (meta.objects, meta.actions) != (matrix.rows(), matrix.cols()) {
            return Err(Error::mismatch("affinity metadata rows", meta.objects, matrix.rows()));
        }
        let mut a = Self::from_values(
            matrix.rows(),
            matrix.cols(),
            matrix.as_slice().to_vec(),
            meta.object_labels,
            meta.action_labels,
        )?;
        a.normalized = meta.normalized;
        a.sparsity_t = meta.top;
        if a.sparsity_t.is_some() {
            a.support = a.values.iter().map(|&v| v != 0.0).collect();
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinityMeta {
    pub normalized: bool,
    pub top: Option<usize>,
    pub objects: usize,
    pub actions: usize,
    pub object_labels: Vec<String>,
    pub action_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn metadata_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// `g[y][z] = <unit(def_y), unit(class_z)>`, clamped to `[-1, 1]` against
/// rounding. No pruning is applied.
pub fn compute_affinity(
    objects: &ObjectVocabulary,
    actions: &ActionVocabulary,
) -> Result<AffinityMatrix> {
    if objects.dim() != actions.dim() {
        return Err(Error::mismatch(
            "object definition dim vs action class dim",
            objects.dim(),
            actions.dim(),
        ));
    }
    let defs = normalize_rows(&objects.definition_embeddings);
    let classes = normalize_rows(&actions.class_embeddings);
    for &y in &defs.zero_rows {
        warn!("object {:?} has an all-zero definition embedding", objects.labels[y]);
    }
    for &z in &classes.zero_rows {
        warn!("action {:?} has an all-zero class embedding", actions.labels[z]);
    }
    let (m, n) = (objects.len(), actions.len());
    let mut values = Vec::with_capacity(m * n);
    for def in defs.matrix.iter_rows() {
        for class in classes.matrix.iter_rows() {
            let dot: f64 = def.iter().zip(class).map(|(a, b)| a * b).sum();
            values.push(dot.clamp(-1.0, 1.0));
        }
    }
    let mut a = AffinityMatrix::from_values(
        m,
        n,
        values,
        objects.labels.clone(),
        actions.labels.clone(),
    )?;
    a.normalized = true;
    Ok(a)
}

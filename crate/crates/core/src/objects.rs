//! Per-video object probabilities and their projection onto actions.

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::topk::{check_t, sparsify_dense};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScoreVector {
    pub probs: Vec<f64>,
    pub sparsity_t: Option<usize>,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Averages logits over frames, then applies a single softmax.
pub fn aggregate_video(frame_logits: &EmbeddingMatrix) -> Result<ObjectScoreVector> {
    let frames = frame_logits.rows();
    if frames == 0 {
        return Err(Error::invalid("video has no frames"));
    }
    if frame_logits.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("frame logits contain non-finite values"));
    }
    let mut mean = vec![0.0; frame_logits.cols()];
    for row in frame_logits.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= frames as f64);
    Ok(ObjectScoreVector {
        probs: softmax(&mean),
        sparsity_t: None,
    })
}

impl ObjectScoreVector {
    /// Keeps the top `t` object probabilities without renormalizing.
    pub fn sparsify(&self, t: usize) -> Result<Self> {
        check_t(t, self.probs.len(), "top objects per video")?;
        Ok(Self {
            probs: sparsify_dense(&self.probs, t),
            sparsity_t: Some(self.sparsity_t.map_or(t, |prev| prev.min(t))),
        })
    }

    /// `scores[z] = sum_y p[y] * g[y][z]`.
    pub fn action_scores(&self, affinity: &AffinityMatrix) -> Result<Vec<f64>> {
        if self.probs.len() != affinity.objects() {
            return Err(Error::mismatch(
                "object scores vs affinity rows",
                affinity.objects(),
                self.probs.len(),
            ));
        }
        let mut scores = vec![0.0; affinity.actions()];
        for (y, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (s, g) in scores.iter_mut().zip(affinity.row(y)) {
                *s += p * g;
            }
        }
        Ok(scores)
    }
}

pub fn sparsify_objects(p: &ObjectScoreVector, t: usize) -> Result<ObjectScoreVector> {
    p.sparsify(t)
}

pub fn object_action_scores(p: &ObjectScoreVector, affinity: &AffinityMatrix) -> Result<Vec<f64>> {
    p.action_scores(affinity)
}

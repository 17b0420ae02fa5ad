//! Additive fusion of sentence probabilities and affinity-weighted object
//! probabilities, with single-source ablation modes.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::objects::{aggregate_video, ObjectScoreVector};
use crate::sentences::{argmax, SentenceClassifier, SentenceScoreVector};
use crate::store::{VideoRecord, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Objects,
    Sentences,
    Fused,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Objects => "objects",
            Mode::Sentences => "sentences",
            Mode::Fused => "fused",
        }
    }

    pub fn uses_sentences(self) -> bool {
        self != Mode::Objects
    }

    pub fn uses_objects(self) -> bool {
        self != Mode::Sentences
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objects" => Ok(Mode::Objects),
            "sentences" => Ok(Mode::Sentences),
            "fused" => Ok(Mode::Fused),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub mode: Mode,
    pub scores: Vec<f64>,
    pub predicted_class: usize,
    pub true_class: Option<usize>,
}

/// Top-T thresholds: objects kept per video, actions kept per video, and
/// objects kept per action in the affinity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityConfig {
    pub top_objects: usize,
    pub top_actions: usize,
    pub top_affinity: usize,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            top_objects: 100,
            top_actions: 5,
            top_affinity: 100,
        }
    }
}

impl SparsityConfig {
    /// Clamps each threshold to the vocabulary it indexes, so a default
    /// larger than a small vocabulary keeps everything. Logs a warning for
    /// each threshold that had to shrink.
    pub fn clamped(self, objects: usize, actions: usize) -> Self {
        for (what, t, max) in [
            ("top-objects", self.top_objects, objects),
            ("top-actions", self.top_actions, actions),
            ("top-affinity", self.top_affinity, objects),
        ] {
            if t > max {
                warn!("{what} threshold {t} exceeds vocabulary size {max}; using {max}");
            }
        }
        self.fit(objects, actions)
    }

    /// [`clamped`](Self::clamped) without the warnings.
    pub fn fit(self, objects: usize, actions: usize) -> Self {
        let clamp = |t: usize, max: usize| t.clamp(1, max.max(1));
        Self {
            top_objects: clamp(self.top_objects, objects),
            top_actions: clamp(self.top_actions, actions),
            top_affinity: clamp(self.top_affinity, objects),
        }
    }

    /// No pruning at any stage.
    pub fn dense(objects: usize, actions: usize) -> Self {
        Self {
            top_objects: objects,
            top_actions: actions,
            top_affinity: objects,
        }
    }
}

/// Scores actions for one video. Objects mode ignores `p_s`; sentences mode
/// ignores `p_v` and the affinity. The returned prediction has an empty
/// `video_id`.
pub fn classify(
    p_s: &SentenceScoreVector,
    p_v: &ObjectScoreVector,
    affinity: &AffinityMatrix,
    mode: Mode,
) -> Result<Prediction> {
    classify_weighted(p_s, p_v, affinity, mode, 1.0)
}

/// As [`classify`], with the object term scaled by `object_weight`.
pub fn classify_weighted(
    p_s: &SentenceScoreVector,
    p_v: &ObjectScoreVector,
    affinity: &AffinityMatrix,
    mode: Mode,
    object_weight: f64,
) -> Result<Prediction> {
    let n = affinity.actions();
    let scores = match mode {
        Mode::Sentences => {
            check_len(&p_s.probs, n)?;
            p_s.probs.clone()
        }
        Mode::Objects => weighted(p_v.action_scores(affinity)?, object_weight),
        Mode::Fused => {
            check_len(&p_s.probs, n)?;
            let objects = weighted(p_v.action_scores(affinity)?, object_weight);
            p_s.probs.iter().zip(&objects).map(|(s, o)| s + o).collect()
        }
    };
    Ok(Prediction {
        video_id: String::new(),
        mode,
        predicted_class: argmax(&scores),
        scores,
        true_class: None,
    })
}

fn weighted(mut scores: Vec<f64>, weight: f64) -> Vec<f64> {
    if weight != 1.0 {
        scores.iter_mut().for_each(|s| *s *= weight);
    }
    scores
}

fn check_len(probs: &[f64], n: usize) -> Result<()> {
    if probs.len() != n {
        return Err(Error::mismatch("sentence scores vs affinity actions", n, probs.len()));
    }
    Ok(())
}

/// Where sentence probabilities come from.
#[derive(Debug, Clone, Copy)]
pub enum SentenceSource<'a> {
    /// Model trained on exactly the scored classes.
    Model(&'a SentenceClassifier),
    /// Model trained on a superset; its output is restricted to `classes`
    /// and renormalized.
    Masked(&'a SentenceClassifier, &'a [usize]),
}

impl SentenceSource<'_> {
    fn classes(&self) -> usize {
        match self {
            SentenceSource::Model(m) => m.classes(),
            SentenceSource::Masked(_, classes) => classes.len(),
        }
    }

    fn model(&self) -> &SentenceClassifier {
        match self {
            SentenceSource::Model(m) | SentenceSource::Masked(m, _) => m,
        }
    }

    fn score(&self, video: &VideoRecord) -> Result<SentenceScoreVector> {
        let full = self.model().predict_video(&video.caption_rows())?;
        match self {
            SentenceSource::Model(_) => Ok(full),
            SentenceSource::Masked(_, classes) => full.restrict(classes),
        }
    }
}

/// Everything needed to classify videos against one action set.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    sentences: Option<SentenceSource<'a>>,
    /// Affinity already pruned with `sparsity.top_affinity`.
    affinity: AffinityMatrix,
    sparsity: SparsityConfig,
    mode: Mode,
    object_weight: f64,
}

impl<'a> Pipeline<'a> {
    /// Validates shapes and prunes the affinity matrix. Thresholds must
    /// already fit the vocabulary (see [`SparsityConfig::clamped`]).
    pub fn new(
        sentences: Option<SentenceSource<'a>>,
        affinity: &AffinityMatrix,
        sparsity: SparsityConfig,
        mode: Mode,
        object_weight: f64,
    ) -> Result<Self> {
        if !object_weight.is_finite() {
            return Err(Error::invalid("object weight must be finite"));
        }
        if mode.uses_sentences() {
            let source = sentences.as_ref().ok_or_else(|| {
                Error::invalid(format!("mode {mode} needs a sentence classifier"))
            })?;
            if source.classes() != affinity.actions() {
                return Err(Error::mismatch(
                    "sentence classifier classes vs affinity actions",
                    affinity.actions(),
                    source.classes(),
                ));
            }
        }
        let affinity = if mode.uses_objects() {
            affinity.sparsify(sparsity.top_affinity)?
        } else {
            affinity.clone()
        };
        if mode.uses_sentences() {
            crate::topk::check_t(sparsity.top_actions, affinity.actions(), "top actions per video")?;
        }
        if mode.uses_objects() {
            crate::topk::check_t(sparsity.top_objects, affinity.objects(), "top objects per video")?;
        }
        Ok(Self {
            sentences,
            affinity,
            sparsity,
            mode,
            object_weight,
        })
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    pub fn classify_video(&self, video: &VideoRecord) -> Result<Prediction> {
        self.classify_inner(video).map_err(|e| Error::Video {
            video_id: video.video_id.clone(),
            source: Box::new(e),
        })
    }

    fn classify_inner(&self, video: &VideoRecord) -> Result<Prediction> {
        let n = self.affinity.actions();
        let m = self.affinity.objects();
        let p_s = match (&self.sentences, self.mode.uses_sentences()) {
            (Some(source), true) => source.score(video)?.sparsify(self.sparsity.top_actions)?,
            _ => SentenceScoreVector {
                probs: vec![0.0; n],
                sparsity_t: None,
            },
        };
        let p_v = if self.mode.uses_objects() {
            aggregate_video(&video.frame_logits)?.sparsify(self.sparsity.top_objects)?
        } else {
            ObjectScoreVector {
                probs: vec![0.0; m],
                sparsity_t: None,
            }
        };
        let mut prediction = classify_weighted(&p_s, &p_v, &self.affinity, self.mode, self.object_weight)?;
        prediction.video_id = video.video_id.clone();
        prediction.true_class = video.true_label;
        Ok(prediction)
    }

    /// One prediction per video, in input order, computed in parallel on
    /// the current rayon pool.
    pub fn classify_all(&self, videos: &[&VideoRecord]) -> Result<Vec<Prediction>> {
        videos.par_iter().map(|v| self.classify_video(v)).collect()
    }
}

/// Classifies every workspace video. `model` may be `None` in objects mode.
pub fn classify_batch(
    workspace: &Workspace,
    model: Option<&SentenceClassifier>,
    affinity: &AffinityMatrix,
    sparsity: SparsityConfig,
    mode: Mode,
    object_weight: f64,
) -> Result<Vec<Prediction>> {
    if affinity.objects() != workspace.object_vocab.len() {
        return Err(Error::mismatch(
            "affinity rows vs workspace objects",
            workspace.object_vocab.len(),
            affinity.objects(),
        ));
    }
    if affinity.actions() != workspace.action_vocab.len() {
        return Err(Error::mismatch(
            "affinity columns vs workspace actions",
            workspace.action_vocab.len(),
            affinity.actions(),
        ));
    }
    if let Some(m) = model {
        if m.dim() != workspace.meta.dim {
            return Err(Error::mismatch("model dim vs workspace dim", workspace.meta.dim, m.dim()));
        }
    }
    let pipeline = Pipeline::new(model.map(SentenceSource::Model), affinity, sparsity, mode, object_weight)?;
    let videos: Vec<&VideoRecord> = workspace.videos.iter().collect();
    pipeline.classify_all(&videos)
}

/// Fraction of labeled predictions that are correct; `None` when no
/// prediction carries a label.
pub fn accuracy(predictions: &[Prediction]) -> Option<f64> {
    let labeled: Vec<_> = predictions.iter().filter_map(|p| p.true_class.map(|t| (p, t))).collect();
    if labeled.is_empty() {
        return None;
    }
    let correct = labeled.iter().filter(|(p, t)| p.predicted_class == *t).count();
    Some(correct as f64 / labeled.len() as f64)
}

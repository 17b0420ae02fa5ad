//! Seeded synthetic workspaces for exercising the whole pipeline without
//! pretrained models.
//!
//! Each action class gets a random unit prototype in embedding space.
//! Description sentences and observer captions are noisy copies of the
//! prototype (captions noisier). Object `j` "belongs" to action `j % n`:
//! its definition embedding leans toward that action's prototype, and
//! videos of an action show raised logits on the action's objects.
//! Every generated value is rounded to `f32` so a saved fixture reloads
//! to an identical in-memory workspace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::store::{
    centroid_class_embeddings, ActionVocabulary, ObjectVocabulary, VideoRecord, Workspace,
    WorkspaceMeta, CLASS_EMBEDDING_MEAN, MANIFEST_VERSION,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub sentences_per_class: usize,
    /// Norm of the noise added to a prototype for each description sentence.
    pub sentence_noise: f64,
    /// Norm of the noise added to a prototype for each caption.
    pub caption_noise: f64,
    pub observers: usize,
    /// Chance that an observer produces no caption for a video.
    pub caption_dropout: f64,
    /// Weight of the home prototype in an object definition (the rest is a
    /// random direction).
    pub definition_alignment: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Logit boost for the true action's objects.
    pub object_boost: f64,
    /// Std of per-frame logit noise.
    pub frame_noise: f64,
    /// Std of a per-video, per-object logit offset shared by all frames.
    pub video_noise: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            sentences_per_class: 12,
            sentence_noise: 0.8,
            caption_noise: 4.0,
            observers: 3,
            caption_dropout: 0.05,
            definition_alignment: 0.6,
            min_frames: 3,
            max_frames: 10,
            object_boost: 1.5,
            frame_noise: 1.0,
            video_noise: 0.8,
        }
    }
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn noisy(rng: &mut ChaCha8Rng, proto: &[f64], noise: f64) -> Vec<f64> {
    let d = proto.len();
    let eps = gaussian_vec(rng, d, noise / (d as f64).sqrt());
    proto.iter().zip(eps).map(|(p, e)| round32(p + e)).collect()
}

/// Fixture with [`FixtureParams::default`].
pub fn generate_fixture(seed: u64, objects: usize, actions: usize, dim: usize, videos: usize) -> Result<Workspace> {
    generate_fixture_with(seed, objects, actions, dim, videos, &FixtureParams::default())
}

pub fn generate_fixture_with(
    seed: u64,
    objects: usize,
    actions: usize,
    dim: usize,
    videos: usize,
    params: &FixtureParams,
) -> Result<Workspace> {
    if objects == 0 || actions == 0 || dim == 0 || videos == 0 {
        return Err(Error::invalid(format!(
            "fixture counts must be >= 1 (objects={objects}, actions={actions}, dim={dim}, videos={videos})"
        )));
    }
    if params.sentences_per_class == 0 || params.min_frames == 0 || params.max_frames < params.min_frames {
        return Err(Error::invalid("fixture params need sentences >= 1 and 1 <= min_frames <= max_frames"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let prototypes: Vec<Vec<f64>> = (0..actions).map(|_| unit(gaussian_vec(&mut rng, dim, 1.0))).collect();

    let mut sentence_rows = Vec::with_capacity(actions * params.sentences_per_class);
    let mut sentence_index = Vec::with_capacity(sentence_rows.capacity());
    let mut sentences = Vec::with_capacity(actions);
    for (z, proto) in prototypes.iter().enumerate() {
        let mut texts = Vec::with_capacity(params.sentences_per_class);
        for s in 0..params.sentences_per_class {
            sentence_rows.push(noisy(&mut rng, proto, params.sentence_noise));
            sentence_index.push(z);
            texts.push(format!("description {s} of action {z}"));
        }
        sentences.push(texts);
    }
    let sentence_embeddings = EmbeddingMatrix::from_rows(&sentence_rows)?;
    let centroids = centroid_class_embeddings(&sentence_embeddings, &sentence_index, actions)?;
    let class_embeddings = EmbeddingMatrix::new(
        actions,
        dim,
        centroids.as_slice().iter().copied().map(round32).collect(),
    )?;

    let align = params.definition_alignment;
    let spread = (1.0 - align * align).max(0.0).sqrt();
    let definition_rows: Vec<Vec<f64>> = (0..objects)
        .map(|y| {
            let other = unit(gaussian_vec(&mut rng, dim, 1.0));
            prototypes[y % actions]
                .iter()
                .zip(other)
                .map(|(p, o)| round32(align * p + spread * o))
                .collect()
        })
        .collect();

    let object_vocab = ObjectVocabulary::new(
        (0..objects).map(|y| format!("object_{y:03}")).collect(),
        (0..objects).map(|y| format!("definition of object {y}")).collect(),
        EmbeddingMatrix::from_rows(&definition_rows)?,
    )?;
    let action_vocab = ActionVocabulary::new(
        (0..actions).map(|z| format!("action_{z:03}")).collect(),
        sentences,
        class_embeddings,
        sentence_embeddings,
        sentence_index,
    )?;

    let mut records = Vec::with_capacity(videos);
    for i in 0..videos {
        let label = i % actions;
        let frames = rng.random_range(params.min_frames..=params.max_frames);
        let offsets = gaussian_vec(&mut rng, objects, params.video_noise);
        let mut logits = Vec::with_capacity(frames * objects);
        for _ in 0..frames {
            for (y, offset) in offsets.iter().enumerate() {
                let boost = if y % actions == label { params.object_boost } else { 0.0 };
                let noise = params.frame_noise * rng.sample::<f64, _>(StandardNormal);
                logits.push(round32(boost + offset + noise));
            }
        }
        let mut captions = Vec::new();
        for _ in 0..params.observers {
            let dropped = rng.random_bool(params.caption_dropout.clamp(0.0, 1.0));
            let row = noisy(&mut rng, &prototypes[label], params.caption_noise);
            if !dropped {
                captions.push(row);
            }
        }
        records.push(VideoRecord {
            video_id: format!("video_{i:05}"),
            frame_logits: EmbeddingMatrix::new(frames, objects, logits)?,
            caption_embeddings: if captions.is_empty() {
                None
            } else {
                Some(EmbeddingMatrix::from_rows(&captions)?)
            },
            true_label: Some(label),
        });
    }

    Workspace::new(
        object_vocab,
        action_vocab,
        records,
        WorkspaceMeta {
            format_version: MANIFEST_VERSION,
            dim,
            class_embedding: CLASS_EMBEDDING_MEAN.into(),
        },
    )
}

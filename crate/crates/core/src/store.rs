//! Vocabularies, per-video records and the JSON manifest that ties matrix
//! files into a workspace.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{load_matrix, save_matrix, write_atomic, EmbeddingMatrix};

pub const MANIFEST_VERSION: u32 = 1;

/// Name recorded in the manifest for how `s(z)` was derived.
pub const CLASS_EMBEDDING_MEAN: &str = "normalized_mean";

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectVocabulary {
    pub labels: Vec<String>,
    pub definitions: Vec<String>,
    pub definition_embeddings: EmbeddingMatrix,
}

impl ObjectVocabulary {
    pub fn new(
        labels: Vec<String>,
        definitions: Vec<String>,
        definition_embeddings: EmbeddingMatrix,
    ) -> Result<Self> {
        check_unique(&labels, "object")?;
        if definitions.len() < labels.len() {
            return Err(Error::MissingDefinition {
                label: labels[definitions.len()].clone(),
            });
        }
        if definitions.len() > labels.len() {
            return Err(Error::mismatch(
                "object definitions",
                labels.len(),
                definitions.len(),
            ));
        }
        if definition_embeddings.rows() != labels.len() {
            return Err(Error::mismatch(
                "object definition embedding rows",
                labels.len(),
                definition_embeddings.rows(),
            ));
        }
        Ok(Self {
            labels,
            definitions,
            definition_embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.definition_embeddings.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionVocabulary {
    pub labels: Vec<String>,
    pub description_sentences: Vec<Vec<String>>,
    /// One representative embedding per class, `n x d`.
    pub class_embeddings: EmbeddingMatrix,
    /// Every description sentence, `total_sentences x d`.
    pub sentence_embeddings: EmbeddingMatrix,
    /// Class of each row of `sentence_embeddings` (the soft label).
    pub sentence_class_index: Vec<usize>,
}

impl ActionVocabulary {
    pub fn new(
        labels: Vec<String>,
        description_sentences: Vec<Vec<String>>,
        class_embeddings: EmbeddingMatrix,
        sentence_embeddings: EmbeddingMatrix,
        sentence_class_index: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        check_unique(&labels, "action")?;
        if description_sentences.len() != n {
            return Err(Error::mismatch(
                "action sentence lists",
                n,
                description_sentences.len(),
            ));
        }
        if let Some(z) = description_sentences.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!(
                "action {:?} has no description sentences",
                labels[z]
            )));
        }
        if class_embeddings.rows() != n {
            return Err(Error::mismatch(
                "action class embedding rows",
                n,
                class_embeddings.rows(),
            ));
        }
        if class_embeddings.cols() != sentence_embeddings.cols() {
            return Err(Error::mismatch(
                "sentence embedding dim vs class embedding dim",
                class_embeddings.cols(),
                sentence_embeddings.cols(),
            ));
        }
        if sentence_class_index.len() != sentence_embeddings.rows() {
            return Err(Error::mismatch(
                "sentence_class_index length",
                sentence_embeddings.rows(),
                sentence_class_index.len(),
            ));
        }
        let mut counts = vec![0usize; n];
        for (row, &z) in sentence_class_index.iter().enumerate() {
            if z >= n {
                return Err(Error::invalid(format!(
                    "sentence row {row} has class index {z}, expected < {n}"
                )));
            }
            counts[z] += 1;
        }
        for (z, (&count, texts)) in counts.iter().zip(&description_sentences).enumerate() {
            if count != texts.len() {
                return Err(Error::mismatch(
                    format!("sentence embeddings for action {:?}", labels[z]),
                    texts.len(),
                    count,
                ));
            }
        }
        Ok(Self {
            labels,
            description_sentences,
            class_embeddings,
            sentence_embeddings,
            sentence_class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.class_embeddings.cols()
    }

    /// Vocabulary over `classes` only, renumbered `0..classes.len()` in the
    /// given order.
    pub fn restrict(&self, classes: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.len()];
        for (i, &z) in classes.iter().enumerate() {
            if z >= self.len() {
                return Err(Error::invalid(format!(
                    "class index {z} out of range for {} actions",
                    self.len()
                )));
            }
            if local[z] != usize::MAX {
                return Err(Error::invalid(format!("class index {z} repeated")));
            }
            local[z] = i;
        }
        // Sentence rows grouped by new class order.
        let mut rows = Vec::new();
        let mut index = Vec::new();
        for (i, &z) in classes.iter().enumerate() {
            for (row, &c) in self.sentence_class_index.iter().enumerate() {
                if c == z {
                    rows.push(row);
                    index.push(i);
                }
            }
        }
        Self::new(
            classes.iter().map(|&z| self.labels[z].clone()).collect(),
            classes
                .iter()
                .map(|&z| self.description_sentences[z].clone())
                .collect(),
            self.class_embeddings.select_rows(classes)?,
            self.sentence_embeddings.select_rows(&rows)?,
            index,
        )
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Mean of each class's sentence embeddings, unit-normalized.
pub fn centroid_class_embeddings(
    sentence_embeddings: &EmbeddingMatrix,
    sentence_class_index: &[usize],
    n_classes: usize,
) -> Result<EmbeddingMatrix> {
    let d = sentence_embeddings.cols();
    let mut sums = vec![0.0; n_classes * d];
    let mut counts = vec![0usize; n_classes];
    for (row, &z) in sentence_embeddings.iter_rows().zip(sentence_class_index) {
        if z >= n_classes {
            return Err(Error::invalid(format!("class index {z} >= {n_classes}")));
        }
        counts[z] += 1;
        for (acc, v) in sums[z * d..(z + 1) * d].iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (z, chunk) in sums.chunks_exact_mut(d).enumerate() {
        if counts[z] == 0 {
            return Err(Error::invalid(format!("class {z} has no sentences")));
        }
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            chunk.iter_mut().for_each(|v| *v /= norm);
        }
    }
    EmbeddingMatrix::new(n_classes, d, sums)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `frames x m` object logits.
    pub frame_logits: EmbeddingMatrix,
    /// `k x d` observer caption embeddings; `None` when no observer produced
    /// a sentence (k = 0).
    pub caption_embeddings: Option<EmbeddingMatrix>,
    pub true_label: Option<usize>,
}

impl VideoRecord {
    pub fn caption_rows(&self) -> Vec<&[f64]> {
        self.caption_embeddings
            .as_ref()
            .map(|m| m.iter_rows().collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMeta {
    pub format_version: u32,
    pub dim: usize,
    pub class_embedding: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    pub object_vocab: ObjectVocabulary,
    pub action_vocab: ActionVocabulary,
    pub videos: Vec<VideoRecord>,
    pub meta: WorkspaceMeta,
}

impl Workspace {
    /// Assembles a workspace and checks every cross-file invariant.
    pub fn new(
        object_vocab: ObjectVocabulary,
        action_vocab: ActionVocabulary,
        videos: Vec<VideoRecord>,
        meta: WorkspaceMeta,
    ) -> Result<Self> {
        let d = meta.dim;
        if object_vocab.dim() != d {
            return Err(Error::mismatch("object embedding dim vs manifest dim", d, object_vocab.dim()));
        }
        if action_vocab.dim() != d {
            return Err(Error::mismatch("action embedding dim vs manifest dim", d, action_vocab.dim()));
        }
        let m = object_vocab.len();
        let n = action_vocab.len();
        let mut ids = HashSet::new();
        for v in &videos {
            if !ids.insert(v.video_id.as_str()) {
                return Err(Error::invalid(format!("duplicate video id {:?}", v.video_id)));
            }
            if v.frame_logits.cols() != m {
                return Err(Error::mismatch(
                    format!("frame logits of video {:?} vs object count", v.video_id),
                    m,
                    v.frame_logits.cols(),
                ));
            }
            if let Some(c) = &v.caption_embeddings {
                if c.cols() != d {
                    return Err(Error::mismatch(
                        format!("caption embedding dim of video {:?}", v.video_id),
                        d,
                        c.cols(),
                    ));
                }
            }
            if let Some(z) = v.true_label {
                if z >= n {
                    return Err(Error::invalid(format!(
                        "video {:?} label {z} out of range for {n} actions",
                        v.video_id
                    )));
                }
            }
        }
        Ok(Self {
            object_vocab,
            action_vocab,
            videos,
            meta,
        })
    }

    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        load_workspace(manifest)
    }

    /// Writes `manifest.json` and all matrix files under `dir`; returns the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("videos")).map_err(|e| Error::io(dir, e))?;
        save_matrix(&self.object_vocab.definition_embeddings, dir.join("objects.zsem"))?;
        save_matrix(&self.action_vocab.class_embeddings, dir.join("class_embeddings.zsem"))?;
        save_matrix(
            &self.action_vocab.sentence_embeddings,
            dir.join("sentence_embeddings.zsem"),
        )?;
        let mut videos = Vec::with_capacity(self.videos.len());
        for (i, v) in self.videos.iter().enumerate() {
            let logits = format!("videos/{i:05}.logits.zsem");
            save_matrix(&v.frame_logits, dir.join(&logits))?;
            let captions = match &v.caption_embeddings {
                Some(c) => {
                    let p = format!("videos/{i:05}.captions.zsem");
                    save_matrix(c, dir.join(&p))?;
                    Some(p)
                }
                None => None,
            };
            videos.push(VideoEntry {
                id: v.video_id.clone(),
                frame_logits_path: logits,
                caption_embeddings_path: captions,
                label: v.true_label,
            });
        }
        let manifest = Manifest {
            format_version: self.meta.format_version,
            dim: self.meta.dim,
            class_embedding: self.meta.class_embedding.clone(),
            objects: ObjectsEntry {
                labels: self.object_vocab.labels.clone(),
                definitions: self.object_vocab.definitions.clone(),
                embeddings_path: "objects.zsem".into(),
            },
            actions: ActionsEntry {
                labels: self.action_vocab.labels.clone(),
                sentences: self.action_vocab.description_sentences.clone(),
                class_embeddings_path: "class_embeddings.zsem".into(),
                sentence_embeddings_path: "sentence_embeddings.zsem".into(),
                sentence_class_index: self.action_vocab.sentence_class_index.clone(),
            },
            videos,
        };
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

/// On-disk manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dim: usize,
    #[serde(default = "default_class_embedding")]
    pub class_embedding: String,
    pub objects: ObjectsEntry,
    pub actions: ActionsEntry,
    pub videos: Vec<VideoEntry>,
}

fn default_class_embedding() -> String {
    CLASS_EMBEDDING_MEAN.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectsEntry {
    pub labels: Vec<String>,
    pub definitions: Vec<String>,
    pub embeddings_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionsEntry {
    pub labels: Vec<String>,
    pub sentences: Vec<Vec<String>>,
    pub class_embeddings_path: String,
    pub sentence_embeddings_path: String,
    pub sentence_class_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub frame_logits_path: String,
    #[serde(default)]
    pub caption_embeddings_path: Option<String>,
    #[serde(default)]
    pub label: Option<usize>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_workspace(manifest_path: impl AsRef<Path>) -> Result<Workspace> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::invalid(format!(
            "unsupported manifest format_version {}",
            manifest.format_version
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let load = |rel: &str| load_matrix(base.join(rel));

    let objects = ObjectVocabulary::new(
        manifest.objects.labels,
        manifest.objects.definitions,
        load(&manifest.objects.embeddings_path)?,
    )?;
    let actions = ActionVocabulary::new(
        manifest.actions.labels,
        manifest.actions.sentences,
        load(&manifest.actions.class_embeddings_path)?,
        load(&manifest.actions.sentence_embeddings_path)?,
        manifest.actions.sentence_class_index,
    )?;
    let videos = manifest
        .videos
        .into_iter()
        .map(|v| {
            Ok(VideoRecord {
                frame_logits: load(&v.frame_logits_path)?,
                caption_embeddings: v
                    .caption_embeddings_path
                    .as_deref()
                    .map(load)
                    .transpose()?,
                video_id: v.id,
                true_label: v.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Workspace::new(
        objects,
        actions,
        videos,
        WorkspaceMeta {
            format_version: manifest.format_version,
            dim: manifest.dim,
            class_embedding: manifest.class_embedding,
        },
    )
}

fn check_unique(labels: &[String], kind: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::invalid(format!("duplicate {kind} label {l:?}")));
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid(format!("{kind} vocabulary is empty")));
    }
    Ok(())
}

//! Supervised sentence classifier `softmax(gelu(s W + b))`, trained on
//! class-description sentences where each sentence carries the label of the
//! class it describes.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::metadata_path;
use crate::error::{Error, Result};
use crate::matrix::{load_matrix, save_matrix, write_atomic, EmbeddingMatrix};
use crate::objects::softmax;
use crate::store::ActionVocabulary;
use crate::topk::{check_t, sparsify_dense};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GeLU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

/// `d/dx gelu(x) = Phi(x) + x * phi(x)`.
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Labeled sentence embeddings.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    pub labels: &'a [usize],
    pub classes: usize,
}

impl<'a> Dataset<'a> {
    pub fn from_vocab(vocab: &'a ActionVocabulary) -> Self {
        Self {
            embeddings: &vocab.sentence_embeddings,
            labels: &vocab.sentence_class_index,
            classes: vocab.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.embeddings.rows() {
            return Err(Error::mismatch(
                "sentence labels",
                self.embeddings.rows(),
                self.labels.len(),
            ));
        }
        let mut counts = vec![0usize; self.classes];
        for &z in self.labels {
            if z >= self.classes {
                return Err(Error::invalid(format!("label {z} >= {} classes", self.classes)));
            }
            counts[z] += 1;
        }
        if let Some(z) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class {z} has no training sentences")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// `d x n`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceClassifier {
    dim: usize,
    classes: usize,
    /// `d x n`, row-major: `weights[i * n + j]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    pub labels: Vec<String>,
    pub training_meta: Option<TrainingMeta>,
}

impl SentenceClassifier {
    pub fn from_parts(
        dim: usize,
        classes: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::invalid("classifier needs d >= 1 and n >= 1"));
        }
        if weights.len() != dim * classes {
            return Err(Error::mismatch("classifier weights", dim * classes, weights.len()));
        }
        if bias.len() != classes {
            return Err(Error::mismatch("classifier bias", classes, bias.len()));
        }
        if labels.len() != classes {
            return Err(Error::mismatch("classifier labels", classes, labels.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("classifier parameters must be finite"));
        }
        Ok(Self {
            dim,
            classes,
            weights,
            bias,
            labels,
            training_meta: None,
        })
    }

    /// Xavier-uniform weights from `seed`, zero bias.
    pub fn initialize(dim: usize, labels: Vec<String>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::initialize_with(dim, labels, &mut rng)
    }

    fn initialize_with(dim: usize, labels: Vec<String>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let classes = labels.len();
        let limit = (6.0 / (dim + classes) as f64).sqrt();
        let weights = (0..dim * classes)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self::from_parts(dim, classes, weights, vec![0.0; classes], labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-activation `s W + b`.
    fn affine(&self, s: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &si) in s.iter().enumerate() {
            let row = &self.weights[i * self.classes..(i + 1) * self.classes];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += si * w;
            }
        }
        z
    }

    pub fn predict(&self, s: &[f64]) -> Result<SentenceScoreVector> {
        if s.len() != self.dim {
            return Err(Error::mismatch("sentence embedding dim", self.dim, s.len()));
        }
        let activated: Vec<f64> = self.affine(s).into_iter().map(gelu).collect();
        Ok(SentenceScoreVector {
            probs: softmax(&activated),
            sparsity_t: None,
        })
    }

    /// Mean prediction over a video's caption rows; uniform when there are
    /// none.
    pub fn predict_video(&self, captions: &[&[f64]]) -> Result<SentenceScoreVector> {
        if captions.is_empty() {
            return Ok(SentenceScoreVector {
                probs: vec![1.0 / self.classes as f64; self.classes],
                sparsity_t: None,
            });
        }
        let mut mean = vec![0.0; self.classes];
        for row in captions {
            for (acc, p) in mean.iter_mut().zip(self.predict(row)?.probs) {
                *acc += p;
            }
        }
        let k = captions.len() as f64;
        mean.iter_mut().for_each(|v| *v /= k);
        Ok(SentenceScoreVector {
            probs: mean,
            sparsity_t: None,
        })
    }

    /// Mean cross-entropy over the dataset.
    pub fn loss(&self, data: &Dataset<'_>) -> f64 {
        let rows: Vec<usize> = (0..data.labels.len()).collect();
        self.batch_loss_and_gradient(data, &rows, false).0
    }

    /// Mean cross-entropy over the whole dataset and its exact gradient.
    pub fn loss_and_gradient(&self, data: &Dataset<'_>) -> (f64, Gradient) {
        let rows: Vec<usize> = (0..data.labels.len()).collect();
        let (loss, grad) = self.batch_loss_and_gradient(data, &rows, true);
        (loss, grad.expect("gradient requested"))
    }

    fn batch_loss_and_gradient(
        &self,
        data: &Dataset<'_>,
        rows: &[usize],
        with_gradient: bool,
    ) -> (f64, Option<Gradient>) {
        let n = self.classes;
        let mut grad = with_gradient.then(|| Gradient {
            weights: vec![0.0; self.dim * n],
            bias: vec![0.0; n],
        });
        let mut total = 0.0;
        for &r in rows {
            let s = data.embeddings.row(r);
            let label = data.labels[r];
            let pre = self.affine(s);
            let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
            let max = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = act.iter().map(|&a| (a - max).exp()).sum();
            let log_norm = max + sum_exp.ln();
            total += log_norm - act[label];
            if let Some(g) = grad.as_mut() {
                // d loss / d pre_j = (p_j - [j == label]) * gelu'(pre_j)
                let delta: Vec<f64> = act
                    .iter()
                    .zip(&pre)
                    .enumerate()
                    .map(|(j, (&a, &z))| {
                        let p = (a - log_norm).exp();
                        let target = if j == label { 1.0 } else { 0.0 };
                        (p - target) * gelu_derivative(z)
                    })
                    .collect();
                for (i, &si) in s.iter().enumerate() {
                    let row = &mut g.weights[i * n..(i + 1) * n];
                    for (gw, dj) in row.iter_mut().zip(&delta) {
                        *gw += si * dj;
                    }
                }
                for (gb, dj) in g.bias.iter_mut().zip(&delta) {
                    *gb += dj;
                }
            }
        }
        let count = rows.len() as f64;
        if let Some(g) = grad.as_mut() {
            g.weights.iter_mut().for_each(|v| *v /= count);
            g.bias.iter_mut().for_each(|v| *v /= count);
        }
        (total / count, grad)
    }

    pub fn accuracy(&self, data: &Dataset<'_>) -> f64 {
        let correct = data
            .embeddings
            .iter_rows()
            .zip(data.labels)
            .filter(|(s, &label)| {
                let probs = self.predict(s).expect("dataset dim checked").probs;
                argmax(&probs) == label
            })
            .count();
        correct as f64 / data.labels.len() as f64
    }

    /// Writes `(d + 1) x n` parameters (W rows then b) at `path` and the
    /// labels and training metadata at `path` + `.json`.
    pub fn save(&self, path: impl AsRef<Path>, config: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let mut data = self.weights.clone();
        data.extend_from_slice(&self.bias);
        save_matrix(&EmbeddingMatrix::new(self.dim + 1, self.classes, data)?, path)?;
        let meta = ModelMeta {
            dim: self.dim,
            classes: self.classes,
            labels: self.labels.clone(),
            training: self.training_meta.clone(),
            config,
        };
        let mut json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        json.push(b'\n');
        write_atomic(&metadata_path(path), &json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let params = load_matrix(path)?;
        let meta_path = metadata_path(path);
        let text = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ModelMeta = serde_json::from_slice(&text).map_err(|source| Error::Json {
            path: meta_path.clone(),
            source,
        })?;
        if params.rows() != meta.dim + 1 {
            return Err(Error::mismatch("model parameter rows", meta.dim + 1, params.rows()));
        }
        if params.cols() != meta.classes {
            return Err(Error::mismatch("model parameter cols", meta.classes, params.cols()));
        }
        let split = meta.dim * meta.classes;
        let values = params.as_slice();
        let mut model = Self::from_parts(
            meta.dim,
            meta.classes,
            values[..split].to_vec(),
            values[split..].to_vec(),
            meta.labels,
        )?;
        model.training_meta = meta.training;
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dim: usize,
    pub classes: usize,
    pub labels: Vec<String>,
    pub training: Option<TrainingMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Lowest index among maximal entries.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch gradient descent on mean cross-entropy. The same seeded stream
/// drives initialization and per-epoch shuffling.
pub fn train(
    data: &Dataset<'_>,
    labels: Vec<String>,
    config: &TrainConfig,
) -> Result<SentenceClassifier> {
    data.validate()?;
    if labels.len() != data.classes {
        return Err(Error::mismatch("class labels", data.classes, labels.len()));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::invalid(format!(
            "learning rate must be finite and >= 0, got {}",
            config.learning_rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SentenceClassifier::initialize_with(data.embeddings.cols(), labels, &mut rng)?;
    let initial_loss = model.loss(data);
    let mut order: Vec<usize> = (0..data.labels.len()).collect();
    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = model.batch_loss_and_gradient(data, batch, true);
            let grad = grad.expect("gradient requested");
            epoch_loss += loss * batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
        }
        epoch_loss /= order.len() as f64;
        let params_finite = model.weights.iter().chain(&model.bias).all(|v| v.is_finite());
        if !epoch_loss.is_finite() || !params_finite {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
    }
    let final_loss = model.loss(data);
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            loss: final_loss,
        });
    }
    model.training_meta = Some(TrainingMeta {
        seed: config.seed,
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        initial_loss,
        final_loss,
        final_accuracy: model.accuracy(data),
    });
    Ok(model)
}

/// Trains on every description sentence of `vocab`, each labeled with its
/// own class.
pub fn train_on_vocab(vocab: &ActionVocabulary, config: &TrainConfig) -> Result<SentenceClassifier> {
    train(&Dataset::from_vocab(vocab), vocab.labels.clone(), config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceScoreVector {
    pub probs: Vec<f64>,
    pub sparsity_t: Option<usize>,
}

impl SentenceScoreVector {
    /// Keeps the top `t` action probabilities without renormalizing.
    pub fn sparsify(&self, t: usize) -> Result<Self> {
        check_t(t, self.probs.len(), "top actions per video")?;
        Ok(Self {
            probs: sparsify_dense(&self.probs, t),
            sparsity_t: Some(self.sparsity_t.map_or(t, |prev| prev.min(t))),
        })
    }

    /// Probabilities of `classes` only, renormalized to sum to one. Used
    /// when a model trained on every class scores a subset.
    pub fn restrict(&self, classes: &[usize]) -> Result<Self> {
        let mut probs = Vec::with_capacity(classes.len());
        for &z in classes {
            let p = *self.probs.get(z).ok_or_else(|| {
                Error::invalid(format!("class {z} out of range for {} scores", self.probs.len()))
            })?;
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        } else {
            probs.fill(1.0 / classes.len() as f64);
        }
        Ok(Self {
            probs,
            sparsity_t: None,
        })
    }
}

pub fn sparsify_sentences(p: &SentenceScoreVector, t: usize) -> Result<SentenceScoreVector> {
    p.sparsify(t)
}

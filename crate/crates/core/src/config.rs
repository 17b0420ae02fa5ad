use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, SentencePolicy};
use crate::fusion::{Mode, SparsityConfig};
use crate::sentences::{SentenceClassifier, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Retrain the sentence classifier on each run's unseen classes.
    Retrain,
    /// Train once on all classes and renormalize over each run's classes.
    Masked,
}

/// Every tunable of the engine. Loaded from a JSON file, then overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Objects kept per video.
    pub top_objects: usize,
    /// Actions kept per video.
    pub top_actions: usize,
    /// Objects kept per action in the affinity matrix.
    pub top_affinity: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
    pub runs: usize,
    /// Unseen classes per run; `None` means all classes.
    pub unseen: Option<usize>,
    pub object_weight: f64,
    pub sentence_policy: PolicyKind,
    pub shuffle_labels: bool,
    pub workspace: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub affinity: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let sparsity = SparsityConfig::default();
        let train = TrainConfig::default();
        Self {
            top_objects: sparsity.top_objects,
            top_actions: sparsity.top_actions,
            top_affinity: sparsity.top_affinity,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            seed: train.seed,
            mode: Mode::Fused,
            runs: 50,
            unseen: None,
            object_weight: 1.0,
            sentence_policy: PolicyKind::Retrain,
            shuffle_labels: false,
            workspace: None,
            model: None,
            affinity: None,
        }
    }
}

impl EngineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("top_objects", self.top_objects),
            ("top_actions", self.top_actions),
            ("top_affinity", self.top_affinity),
            ("batch_size", self.batch_size),
            ("runs", self.runs),
        ] {
            if t == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.unseen == Some(0) {
            return Err(Error::invalid("unseen must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if !self.object_weight.is_finite() {
            return Err(Error::invalid("object_weight must be finite"));
        }
        Ok(())
    }

    pub fn sparsity(&self) -> SparsityConfig {
        SparsityConfig {
            top_objects: self.top_objects,
            top_actions: self.top_actions,
            top_affinity: self.top_affinity,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    /// `masked` requires a classifier trained on every class.
    pub fn eval(&self, masked_model: Option<SentenceClassifier>) -> Result<EvalConfig> {
        let policy = match (self.sentence_policy, masked_model) {
            (PolicyKind::Retrain, _) => SentencePolicy::Retrain(self.train()),
            (PolicyKind::Masked, Some(model)) => SentencePolicy::Masked(model),
            (PolicyKind::Masked, None) => {
                return Err(Error::invalid("sentence policy `masked` needs --model"));
            }
        };
        Ok(EvalConfig {
            sparsity: self.sparsity(),
            mode: self.mode,
            policy,
            object_weight: self.object_weight,
            shuffle_labels: self.shuffle_labels,
        })
    }

    /// Behavior-affecting settings, written into output artifacts. Paths
    /// and thread counts are left out so outputs depend only on behavior.
    pub fn echo(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in ["workspace", "model", "affinity"] {
                map.remove(key);
            }
        }
        value
    }
}

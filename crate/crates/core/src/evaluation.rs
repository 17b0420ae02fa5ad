//! Repeated unseen-class evaluation.
//!
//! Every run picks a set of unseen classes (randomly or from a fixed list),
//! rebuilds the classifier over exactly those classes and scores the videos
//! labeled with one of them. No class is ever used for training on video
//! data; the seen set is empty.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::fusion::{Mode, Pipeline, Prediction, SentenceSource, SparsityConfig};
use crate::matrix::write_atomic;
use crate::sentences::{train_on_vocab, SentenceClassifier, TrainConfig, TrainingMeta};
use crate::store::{ActionVocabulary, VideoRecord, Workspace};

/// Mixed into run seeds for the label-shuffle stream so it never coincides
/// with the training stream.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4521;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub unseen_class_indices: Vec<usize>,
    pub seed: u64,
    pub run_index: usize,
}

impl SplitSpec {
    /// Seed of this run's private random stream.
    pub fn run_seed(&self) -> u64 {
        self.seed.wrapping_add(self.run_index as u64)
    }

    fn validate(&self, n_total: usize) -> Result<()> {
        if self.unseen_class_indices.is_empty() {
            return Err(Error::invalid("split has no unseen classes"));
        }
        let mut seen = vec![false; n_total];
        for &z in &self.unseen_class_indices {
            if z >= n_total {
                return Err(Error::invalid(format!("unseen class {z} out of range for {n_total} actions")));
            }
            if std::mem::replace(&mut seen[z], true) {
                return Err(Error::invalid(format!("unseen class {z} listed twice")));
            }
        }
        Ok(())
    }
}

/// `runs` random splits of `n_unseen` classes out of `n_total`, sampled
/// without replacement. Run `r` draws from a stream seeded by `seed + r`;
/// indices are sorted ascending.
pub fn generate_splits(n_total: usize, n_unseen: usize, runs: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if n_unseen == 0 || n_unseen > n_total {
        return Err(Error::invalid(format!(
            "unseen class count {n_unseen} must be in 1..={n_total}"
        )));
    }
    if runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    Ok((0..runs)
        .map(|run_index| {
            let mut split = SplitSpec {
                unseen_class_indices: Vec::new(),
                seed,
                run_index,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(split.run_seed());
            let mut picked = index::sample(&mut rng, n_total, n_unseen).into_vec();
            picked.sort_unstable();
            split.unseen_class_indices = picked;
            split
        })
        .collect())
}

/// Fixed splits given by class name, such as a protocol that removes
/// classes overlapping another dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitFile {
    Single(Vec<String>),
    Named {
        #[serde(default)]
        name: Option<String>,
        splits: Vec<Vec<String>>,
    },
}

impl SplitFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn class_lists(&self) -> &[Vec<String>] {
        match self {
            SplitFile::Single(names) => std::slice::from_ref(names),
            SplitFile::Named { splits, .. } => splits,
        }
    }

    pub fn to_splits(&self, vocab: &ActionVocabulary, seed: u64) -> Result<Vec<SplitSpec>> {
        self.class_lists()
            .iter()
            .enumerate()
            .map(|(run_index, names)| {
                let mut indices = names
                    .iter()
                    .map(|name| {
                        vocab
                            .index_of(name)
                            .ok_or_else(|| Error::invalid(format!("split names unknown action {name:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                indices.sort_unstable();
                let split = SplitSpec {
                    unseen_class_indices: indices,
                    seed,
                    run_index,
                };
                split.validate(vocab.len())?;
                Ok(split)
            })
            .collect()
    }
}

/// How the sentence classifier is obtained for each run.
#[derive(Debug, Clone)]
pub enum SentencePolicy {
    /// Train a fresh classifier on the run's unseen classes. The configured
    /// seed is offset by the run seed.
    Retrain(TrainConfig),
    /// Use one classifier trained on every class and renormalize its output
    /// over the run's classes.
    Masked(SentenceClassifier),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub sparsity: SparsityConfig,
    pub mode: Mode,
    pub policy: SentencePolicy,
    pub object_weight: f64,
    /// Control condition: permute video labels independently in every run.
    pub shuffle_labels: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sparsity: SparsityConfig::default(),
            mode: Mode::Fused,
            policy: SentencePolicy::Retrain(TrainConfig::default()),
            object_weight: 1.0,
            shuffle_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRunAccuracy {
    pub run: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub unseen: Vec<usize>,
    pub videos: usize,
    pub correct: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

/// Result of one run, with predictions in global class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// `(class, correct, total)` for each unseen class with videos.
    pub per_class: Vec<(usize, usize, usize)>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub per_run_accuracy: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over runs; zero for a single run.
    pub stddev: f64,
    /// Class index to its accuracy in each run where it was unseen.
    pub per_class: BTreeMap<usize, Vec<ClassRunAccuracy>>,
    pub runs: Vec<RunRecord>,
    pub class_labels: Vec<String>,
}

pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunStatistics {
    pub fn from_outcomes(outcomes: &[RunOutcome], class_labels: Vec<String>) -> Self {
        let per_run_accuracy: Vec<f64> = outcomes.iter().map(|o| o.record.accuracy).collect();
        let (mean, stddev) = mean_and_stddev(&per_run_accuracy);
        let mut per_class: BTreeMap<usize, Vec<ClassRunAccuracy>> = BTreeMap::new();
        for o in outcomes {
            for &(class, correct, total) in &o.per_class {
                per_class.entry(class).or_default().push(ClassRunAccuracy {
                    run: o.record.run_index,
                    accuracy: correct as f64 / total as f64,
                });
            }
        }
        Self {
            per_run_accuracy,
            mean,
            stddev,
            per_class,
            runs: outcomes.iter().map(|o| o.record.clone()).collect(),
            class_labels,
        }
    }

    /// `stddev / sqrt(runs)`.
    pub fn standard_error(&self) -> f64 {
        self.stddev / (self.per_run_accuracy.len() as f64).sqrt()
    }

    /// Checks the stored aggregates against the per-run values.
    pub fn validate(&self) -> Result<()> {
        let (mean, stddev) = mean_and_stddev(&self.per_run_accuracy);
        if (mean - self.mean).abs() > 1e-12 || (stddev - self.stddev).abs() > 1e-12 {
            return Err(Error::invalid("stored mean/stddev disagree with per-run accuracies"));
        }
        let all = self
            .per_run_accuracy
            .iter()
            .chain(self.per_class.values().flatten().map(|c| &c.accuracy));
        if all.into_iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("accuracy outside [0, 1]"));
        }
        Ok(())
    }
}

/// Runs every split and aggregates. Runs execute in parallel on the current
/// rayon pool; the reduction follows split order.
pub fn evaluate(
    workspace: &Workspace,
    affinity: &AffinityMatrix,
    splits: &[SplitSpec],
    config: &EvalConfig,
) -> Result<RunStatistics> {
    if splits.is_empty() {
        return Err(Error::invalid("no splits to evaluate"));
    }
    let smallest = splits.iter().map(|s| s.unseen_class_indices.len()).min().unwrap_or(0);
    config.sparsity.clamped(affinity.objects(), smallest);
    let outcomes = splits
        .par_iter()
        .map(|split| {
            evaluate_run(workspace, affinity, split, config).map_err(|e| Error::Run {
                run_index: split.run_index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunStatistics::from_outcomes(&outcomes, workspace.action_vocab.labels.clone()))
}

/// Labels used for scoring in one run: the recorded ones, or a permutation
/// of them drawn from the run's stream.
fn run_labels(workspace: &Workspace, split: &SplitSpec, shuffle: bool) -> Vec<Option<usize>> {
    let mut labels: Vec<Option<usize>> = workspace.videos.iter().map(|v| v.true_label).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(split.run_seed() ^ SHUFFLE_STREAM);
        let mut present: Vec<usize> = labels.iter().flatten().copied().collect();
        present.shuffle(&mut rng);
        let mut it = present.into_iter();
        for l in labels.iter_mut().filter(|l| l.is_some()) {
            *l = it.next();
        }
    }
    labels
}

pub fn evaluate_run(
    workspace: &Workspace,
    affinity: &AffinityMatrix,
    split: &SplitSpec,
    config: &EvalConfig,
) -> Result<RunOutcome> {
    let n_total = workspace.action_vocab.len();
    split.validate(n_total)?;
    if affinity.actions() != n_total || affinity.objects() != workspace.object_vocab.len() {
        return Err(Error::mismatch("affinity shape vs workspace actions", n_total, affinity.actions()));
    }
    let unseen = &split.unseen_class_indices;
    let mut local = vec![None; n_total];
    for (i, &z) in unseen.iter().enumerate() {
        local[z] = Some(i);
    }

    let labels = run_labels(workspace, split, config.shuffle_labels);
    let mut videos: Vec<&VideoRecord> = Vec::new();
    let mut targets: Vec<usize> = Vec::new();
    for (video, label) in workspace.videos.iter().zip(&labels) {
        if let Some(l) = label.and_then(|z| local[z]) {
            videos.push(video);
            targets.push(l);
        }
    }
    if videos.is_empty() {
        return Err(Error::invalid("no labeled videos belong to the unseen classes"));
    }

    let trained;
    let (source, training) = if config.mode.uses_sentences() {
        match &config.policy {
            SentencePolicy::Retrain(train) => {
                let vocab = workspace.action_vocab.restrict(unseen)?;
                let train = TrainConfig {
                    seed: train.seed.wrapping_add(split.run_seed()),
                    ..train.clone()
                };
                trained = train_on_vocab(&vocab, &train)?;
                (Some(SentenceSource::Model(&trained)), trained.training_meta.clone())
            }
            SentencePolicy::Masked(model) => {
                if model.classes() != n_total {
                    return Err(Error::mismatch("masked model classes vs workspace actions", n_total, model.classes()));
                }
                (Some(SentenceSource::Masked(model, unseen)), None)
            }
        }
    } else {
        (None, None)
    };

    let columns = affinity.select_actions(unseen)?;
    let sparsity = config.sparsity.fit(columns.objects(), unseen.len());
    let pipeline = Pipeline::new(source, &columns, sparsity, config.mode, config.object_weight)?;
    let local_predictions = pipeline.classify_all(&videos)?;

    let mut per_class_counts = vec![(0usize, 0usize); unseen.len()];
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(local_predictions.len());
    for (mut p, &target) in local_predictions.into_iter().zip(&targets) {
        let hit = p.predicted_class == target;
        correct += hit as usize;
        per_class_counts[target].0 += hit as usize;
        per_class_counts[target].1 += 1;
        p.predicted_class = unseen[p.predicted_class];
        p.true_class = Some(unseen[target]);
        predictions.push(p);
    }
    let per_class = per_class_counts
        .iter()
        .enumerate()
        .filter(|(_, &(_, total))| total > 0)
        .map(|(i, &(c, total))| (unseen[i], c, total))
        .collect();
    Ok(RunOutcome {
        record: RunRecord {
            run_index: split.run_index,
            seed: split.seed,
            unseen: unseen.clone(),
            videos: videos.len(),
            correct,
            accuracy: correct as f64 / videos.len() as f64,
            training,
        },
        per_class,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub mean: f64,
    pub stddev: f64,
    pub standard_error: f64,
    pub runs: usize,
    pub per_run_accuracy: Vec<f64>,
    pub run_details: Vec<RunRecord>,
    pub config: serde_json::Value,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const PER_CLASS_FILE: &str = "per_class.csv";

/// Writes `summary.json` and `per_class.csv` (one row per class and run in
/// which the class was unseen) into `dir`.
pub fn emit_report(stats: &RunStatistics, config: &serde_json::Value, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    stats.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = ReportSummary {
        mean: stats.mean,
        stddev: stats.stddev,
        standard_error: stats.standard_error(),
        runs: stats.per_run_accuracy.len(),
        per_run_accuracy: stats.per_run_accuracy.clone(),
        run_details: stats.runs.clone(),
        config: config.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    json.push(b'\n');
    write_atomic(&dir.join(SUMMARY_FILE), &json)?;

    let csv_path = dir.join(PER_CLASS_FILE);
    let csv_err = |source| Error::Csv {
        path: csv_path.clone(),
        source,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["class_index", "class", "run", "accuracy"])
        .map_err(csv_err)?;
    for (&class, entries) in &stats.per_class {
        let label = stats.class_labels.get(class).map_or("", String::as_str);
        for e in entries {
            writer
                .write_record([
                    class.to_string(),
                    label.to_string(),
                    e.run.to_string(),
                    e.accuracy.to_string(),
                ])
                .map_err(csv_err)?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(&csv_path, e.into_error()))?;
    write_atomic(&csv_path, &bytes)
}

pub fn read_summary(dir: impl AsRef<Path>) -> Result<ReportSummary> {
    let path = dir.as_ref().join(SUMMARY_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::compute_affinity;
    use crate::fixture::{generate_fixture, generate_fixture_with, FixtureParams};

    #[test]
    fn exhaustive_split_contains_everything() {
        let splits = generate_splits(5, 5, 3, 9).unwrap();
        assert!(splits.iter().all(|s| s.unseen_class_indices == vec![0, 1, 2, 3, 4]));
        assert_eq!(splits[2].run_index, 2);
    }

    #[test]
    fn splits_are_deterministic_and_unique() {
        let a = generate_splits(101, 50, 50, 4).unwrap();
        assert_eq!(a, generate_splits(101, 50, 50, 4).unwrap());
        for s in &a {
            let mut u = s.unseen_class_indices.clone();
            u.dedup();
            assert_eq!(u.len(), 50);
        }
        assert_ne!(a[0], a[1]);
        assert!(generate_splits(101, 102, 1, 0).is_err());
        assert!(generate_splits(5, 0, 1, 0).is_err());
        assert!(generate_splits(5, 2, 0, 0).is_err());
    }

    #[test]
    fn inclusion_frequency_near_expected() {
        // Each class should appear in about 50/101 of the runs.
        let runs = 4000;
        let splits = generate_splits(101, 50, runs, 77).unwrap();
        let mut counts = vec![0usize; 101];
        for s in &splits {
            for &z in &s.unseen_class_indices {
                counts[z] += 1;
            }
        }
        let p = 50.0 / 101.0;
        let sd = (runs as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - runs as f64 * p).abs() < 5.0 * sd, "count {c}");
        }
    }

    #[test]
    fn perfect_predictions_give_unit_accuracy() {
        let params = FixtureParams {
            sentence_noise: 0.0,
            caption_noise: 0.0,
            caption_dropout: 0.0,
            definition_alignment: 1.0,
            frame_noise: 0.0,
            video_noise: 0.0,
            object_boost: 5.0,
            ..FixtureParams::default()
        };
        let ws = generate_fixture_with(3, 8, 4, 16, 40, &params).unwrap();
        let g = compute_affinity(&ws.object_vocab, &ws.action_vocab).unwrap();
        let splits = generate_splits(4, 4, 1, 0).unwrap();
        let stats = evaluate(&ws, &g, &splits, &EvalConfig::default()).unwrap();
        assert_eq!(stats.per_run_accuracy, vec![1.0]);
        assert_eq!((stats.mean, stats.stddev), (1.0, 0.0));
        stats.validate().unwrap();
    }

    #[test]
    fn single_class_always_correct() {
        let ws = generate_fixture(5, 4, 1, 8, 10).unwrap();
        let g = compute_affinity(&ws.object_vocab, &ws.action_vocab).unwrap();
        let splits = generate_splits(1, 1, 2, 0).unwrap();
        let stats = evaluate(&ws, &g, &splits, &EvalConfig::default()).unwrap();
        assert_eq!(stats.per_run_accuracy, vec![1.0, 1.0]);
    }

    #[test]
    fn per_class_only_for_unseen_runs() {
        let ws = generate_fixture(1, 12, 6, 8, 60).unwrap();
        let g = compute_affinity(&ws.object_vocab, &ws.action_vocab).unwrap();
        let splits = generate_splits(6, 3, 8, 2).unwrap();
        let config = EvalConfig {
            policy: SentencePolicy::Retrain(TrainConfig { epochs: 20, ..TrainConfig::default() }),
            ..EvalConfig::default()
        };
        let stats = evaluate(&ws, &g, &splits, &config).unwrap();
        for (class, entries) in &stats.per_class {
            for e in entries {
                assert!(splits[e.run].unseen_class_indices.contains(class));
            }
        }
        for s in &splits {
            for z in &s.unseen_class_indices {
                assert!(stats.per_class[z].iter().any(|e| e.run == s.run_index));
            }
        }
    }

    #[test]
    fn report_round_trip_and_csv_rows() {
        let stats = RunStatistics {
            per_run_accuracy: vec![0.1, 0.7, 1.0 / 3.0],
            mean: (0.1 + 0.7 + 1.0 / 3.0) / 3.0,
            stddev: mean_and_stddev(&[0.1, 0.7, 1.0 / 3.0]).1,
            per_class: BTreeMap::from([(
                2,
                vec![ClassRunAccuracy { run: 0, accuracy: 0.5 }, ClassRunAccuracy { run: 2, accuracy: 0.25 }],
            )]),
            runs: vec![],
            class_labels: vec!["a".into(), "b".into(), "c".into()],
        };
        let stats = RunStatistics {
            mean: mean_and_stddev(&stats.per_run_accuracy).0,
            ..stats
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&stats, &serde_json::json!({"mode": "fused"}), dir.path()).unwrap();
        let summary = read_summary(dir.path()).unwrap();
        assert_eq!(summary.mean.to_bits(), stats.mean.to_bits());
        assert_eq!(summary.stddev.to_bits(), stats.stddev.to_bits());
        let csv = fs::read_to_string(dir.path().join(PER_CLASS_FILE)).unwrap();
        assert_eq!(csv, "class_index,class,run,accuracy\n2,c,0,0.5\n2,c,2,0.25\n");
    }

    #[test]
    fn empty_per_class_gives_header_only() {
        let stats = RunStatistics {
            per_run_accuracy: vec![0.5],
            mean: 0.5,
            stddev: 0.0,
            per_class: BTreeMap::new(),
            runs: vec![],
            class_labels: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&stats, &serde_json::Value::Null, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(PER_CLASS_FILE)).unwrap();
        assert_eq!(csv, "class_index,class,run,accuracy\n");
    }

    #[test]
    fn split_file_forms() {
        let ws = generate_fixture(1, 4, 4, 4, 8).unwrap();
        let single: SplitFile = serde_json::from_str(r#"["action_003", "action_001"]"#).unwrap();
        let splits = single.to_splits(&ws.action_vocab, 0).unwrap();
        assert_eq!(splits[0].unseen_class_indices, vec![1, 3]);
        let named: SplitFile =
            serde_json::from_str(r#"{"name": "fixed", "splits": [["action_000"], ["action_002", "action_001"]]}"#)
                .unwrap();
        let splits = named.to_splits(&ws.action_vocab, 0).unwrap();
        assert_eq!(splits.len(), 2);
        assert_eq!(splits[1].unseen_class_indices, vec![1, 2]);
        let bad: SplitFile = serde_json::from_str(r#"["nope"]"#).unwrap();
        assert!(bad.to_splits(&ws.action_vocab, 0).is_err());
    }
}

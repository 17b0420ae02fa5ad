//! Command-line front end. `run` parses arguments, executes one subcommand
//! and maps failures to exit codes:
//!
//! | code | category    |
//! |------|-------------|
//! | 0    | success     |
//! | 2    | usage       |
//! | 3    | io          |
//! | 4    | invariant   |
//! | 5    | format      |
//! | 6    | numeric     |
//!
//! On failure the last line written to stderr is `error[<category>]: <message>`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::affinity::{compute_affinity, AffinityMatrix};
use crate::config::{EngineConfig, PolicyKind};
use crate::error::{Error, Result};
use crate::evaluation::{emit_report, evaluate, generate_splits, SplitFile};
use crate::fixture::generate_fixture;
use crate::fusion::{classify_batch, Mode, SparsityConfig};
use crate::matrix::write_atomic;
use crate::objects::aggregate_video;
use crate::sentences::{train_on_vocab, SentenceClassifier};
use crate::store::{load_workspace, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_NUMERIC: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "zsar", version, about = "Zero-shot action classification from object affinity and sentence scores")]
struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log filter for stderr (error, warn, info, debug, trace) [default: warn]
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic workspaces
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// Object-action affinity matrices
    #[command(subcommand)]
    Affinity(AffinityCommand),
    /// Train the sentence classifier on every description sentence
    TrainSentences(TrainArgs),
    /// Per-video scores from one classifier
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Predict an action for every video
    Classify(ClassifyArgs),
    /// Repeated unseen-class evaluation
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Subcommand)]
enum FixtureCommand {
    /// Write a seeded synthetic workspace
    Generate(FixtureArgs),
}

#[derive(Debug, Args)]
struct FixtureArgs {
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Object classes
    #[arg(long, default_value_t = 50)]
    objects: usize,
    /// Action classes
    #[arg(long, default_value_t = 20)]
    actions: usize,
    /// Embedding dimension
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Number of videos
    #[arg(long, default_value_t = 400)]
    videos: usize,
    /// Output directory (manifest.json and fixture.json are written inside)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum AffinityCommand {
    /// Build the affinity matrix from a workspace
    Build(AffinityArgs),
}

#[derive(Debug, Args)]
struct AffinityArgs {
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Objects kept per action [default: 100, clamped to object count]
    #[arg(long)]
    top: Option<usize>,
    /// Output matrix file; metadata goes to <out>.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Training epochs [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 0.1]
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    batch: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output model file; metadata goes to <out>.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ScoreCommand {
    /// Affinity-weighted object scores per action
    Objects(ScoreObjectsArgs),
    /// Sentence-classifier probabilities per action
    Sentences(ScoreSentencesArgs),
}

#[derive(Debug, Args)]
struct ScoreObjectsArgs {
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Affinity matrix file
    #[arg(long)]
    affinity: Option<PathBuf>,
    /// Objects kept per video [default: 100, clamped to object count]
    #[arg(long)]
    top_objects: Option<usize>,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreSentencesArgs {
    /// Sentence model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Actions kept per video [default: 5, clamped to action count]
    #[arg(long)]
    top_actions: Option<usize>,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Sentence model file (not needed in objects mode)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Affinity matrix file (not needed in sentences mode)
    #[arg(long)]
    affinity: Option<PathBuf>,
    /// Score source [default: fused]
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Objects kept per video [default: 100, clamped to object count]
    #[arg(long)]
    top_objects: Option<usize>,
    /// Actions kept per video [default: 5, clamped to action count]
    #[arg(long)]
    top_actions: Option<usize>,
    /// Multiplier on the object term [default: 1.0]
    #[arg(long)]
    object_weight: Option<f64>,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Workspace manifest
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Random runs [default: 50]
    #[arg(long)]
    runs: Option<usize>,
    /// Unseen classes per run [default: all classes]
    #[arg(long)]
    unseen: Option<usize>,
    /// Seed for splits and training [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Score source [default: fused]
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Objects kept per video [default: 100]
    #[arg(long)]
    top_objects: Option<usize>,
    /// Actions kept per video [default: 5]
    #[arg(long)]
    top_actions: Option<usize>,
    /// Objects kept per action [default: 100]
    #[arg(long)]
    top_affinity: Option<usize>,
    /// Training epochs per run [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 0.1]
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    batch: Option<usize>,
    /// Multiplier on the object term [default: 1.0]
    #[arg(long)]
    object_weight: Option<f64>,
    /// How each run gets its sentence classifier [default: retrain]
    #[arg(long, value_enum)]
    sentence_policy: Option<PolicyKind>,
    /// Model trained on all classes, for --sentence-policy masked
    #[arg(long)]
    model: Option<PathBuf>,
    /// Precomputed affinity matrix [default: built from the workspace]
    #[arg(long)]
    affinity: Option<PathBuf>,
    /// Permute video labels in every run (chance-level control)
    #[arg(long)]
    shuffle_labels: bool,
    /// JSON list of unseen class names (or {"splits": [[...], ...]}) instead of random runs
    #[arg(long)]
    split_file: Option<PathBuf>,
    /// Report directory (summary.json, per_class.csv)
    #[arg(long)]
    report: PathBuf,
}

/// Executes the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            eprintln!("error[usage]: {}", e.kind());
            return EXIT_USAGE;
        }
    };
    init_logging(cli.log_level.as_deref());
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (code, category) = classify_error(&e);
            eprintln!("error[{category}]: {e}");
            code
        }
    }
}

fn classify_error(e: &Error) -> (i32, &'static str) {
    match e.root() {
        Error::Io { .. } => (EXIT_IO, "io"),
        Error::Format { .. } | Error::Json { .. } | Error::Csv { .. } => (EXIT_FORMAT, "format"),
        Error::Divergence { .. } => (EXIT_NUMERIC, "numeric"),
        _ => (EXIT_INVARIANT, "invariant"),
    }
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or(level.unwrap_or("warn"));
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Fixture(FixtureCommand::Generate(args)) => fixture_generate(&mut config, args),
        Command::Affinity(AffinityCommand::Build(args)) => affinity_build(&mut config, args),
        Command::TrainSentences(args) => train_sentences(&mut config, args),
        Command::Score(ScoreCommand::Objects(args)) => score_objects(&mut config, args),
        Command::Score(ScoreCommand::Sentences(args)) => score_sentences(&mut config, args),
        Command::Classify(args) => classify(&mut config, args),
        Command::Evaluate(args) => evaluate_cmd(&mut config, args),
    })
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn required(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::invalid(format!("missing --{flag} (flag or config file)")))
}

fn workspace(config: &EngineConfig) -> Result<Workspace> {
    let path = required(&config.workspace, "workspace")?;
    info!("loading workspace {}", path.display());
    load_workspace(path)
}

fn fit_threshold(t: usize, max: usize, what: &str) -> usize {
    if t > max {
        log::warn!("{what} threshold {t} exceeds vocabulary size {max}; using {max}");
    }
    t.min(max)
}

fn write_sidecar(out: &Path, config: &EngineConfig) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(&serde_json::json!({ "config": config.echo() }))
        .expect("config serializes");
    json.push(b'\n');
    write_atomic(&crate::affinity::metadata_path(out), &json)
}

fn write_csv(out: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: out.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(out, e.into_error()))?;
    write_atomic(out, &bytes)
}

fn fixture_generate(config: &mut EngineConfig, args: FixtureArgs) -> Result<()> {
    set(&mut config.seed, args.seed);
    let ws = generate_fixture(config.seed, args.objects, args.actions, args.dim, args.videos)?;
    let manifest = ws.save(&args.out)?;
    let params = serde_json::json!({
        "seed": config.seed,
        "objects": args.objects,
        "actions": args.actions,
        "dim": args.dim,
        "videos": args.videos,
    });
    let mut json = serde_json::to_vec_pretty(&params).expect("params serialize");
    json.push(b'\n');
    write_atomic(&args.out.join("fixture.json"), &json)?;
    info!("wrote fixture manifest {}", manifest.display());
    Ok(())
}

fn affinity_build(config: &mut EngineConfig, args: AffinityArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.top_affinity, args.top);
    config.validate()?;
    let ws = workspace(config)?;
    let top = fit_threshold(config.top_affinity, ws.object_vocab.len(), "top-affinity");
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?.sparsify(top)?;
    g.save(&args.out, Some(config.echo()))?;
    info!("wrote {}x{} affinity (top {top}) to {}", g.objects(), g.actions(), args.out.display());
    Ok(())
}

fn train_sentences(config: &mut EngineConfig, args: TrainArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.epochs, args.epochs);
    set(&mut config.learning_rate, args.lr);
    set(&mut config.batch_size, args.batch);
    set(&mut config.seed, args.seed);
    config.validate()?;
    let ws = workspace(config)?;
    let model = train_on_vocab(&ws.action_vocab, &config.train())?;
    if let Some(meta) = &model.training_meta {
        info!(
            "trained: loss {:.6} -> {:.6}, accuracy {:.4}",
            meta.initial_loss, meta.final_loss, meta.final_accuracy
        );
    }
    model.save(&args.out, Some(config.echo()))
}

fn load_affinity_for(config: &EngineConfig, ws: &Workspace) -> Result<AffinityMatrix> {
    match &config.affinity {
        Some(path) => AffinityMatrix::load(path),
        None => compute_affinity(&ws.object_vocab, &ws.action_vocab),
    }
}

fn score_header(ws: &Workspace) -> Vec<String> {
    std::iter::once("video_id".to_string())
        .chain(ws.action_vocab.labels.iter().cloned())
        .collect()
}

fn score_objects(config: &mut EngineConfig, args: ScoreObjectsArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.affinity, args.affinity.map(Some));
    set(&mut config.top_objects, args.top_objects);
    config.validate()?;
    let ws = workspace(config)?;
    let g = AffinityMatrix::load(required(&config.affinity, "affinity")?)?;
    let m = ws.object_vocab.len();
    if g.objects() != m || g.actions() != ws.action_vocab.len() {
        return Err(Error::mismatch("affinity rows vs workspace objects", m, g.objects()));
    }
    let top = fit_threshold(config.top_objects, m, "top-objects");
    let rows = ws
        .videos
        .iter()
        .map(|v| {
            let scores = aggregate_video(&v.frame_logits)
                .and_then(|p| p.sparsify(top))
                .and_then(|p| p.action_scores(&g))
                .map_err(|e| Error::Video {
                    video_id: v.video_id.clone(),
                    source: Box::new(e),
                })?;
            Ok(std::iter::once(v.video_id.clone())
                .chain(scores.iter().map(f64::to_string))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&args.out, score_header(&ws), rows)?;
    write_sidecar(&args.out, config)
}

fn score_sentences(config: &mut EngineConfig, args: ScoreSentencesArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.model, args.model.map(Some));
    set(&mut config.top_actions, args.top_actions);
    config.validate()?;
    let ws = workspace(config)?;
    let model = SentenceClassifier::load(required(&config.model, "model")?)?;
    check_model(&model, &ws)?;
    let top = fit_threshold(config.top_actions, ws.action_vocab.len(), "top-actions");
    let rows = ws
        .videos
        .iter()
        .map(|v| {
            let p = model
                .predict_video(&v.caption_rows())
                .and_then(|p| p.sparsify(top))
                .map_err(|e| Error::Video {
                    video_id: v.video_id.clone(),
                    source: Box::new(e),
                })?;
            Ok(std::iter::once(v.video_id.clone())
                .chain(p.probs.iter().map(f64::to_string))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&args.out, score_header(&ws), rows)?;
    write_sidecar(&args.out, config)
}

fn check_model(model: &SentenceClassifier, ws: &Workspace) -> Result<()> {
    if model.dim() != ws.meta.dim {
        return Err(Error::mismatch("model dim vs workspace dim", ws.meta.dim, model.dim()));
    }
    if model.labels != ws.action_vocab.labels {
        return Err(Error::invalid("model class labels differ from workspace actions"));
    }
    Ok(())
}

fn classify(config: &mut EngineConfig, args: ClassifyArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.model, args.model.map(Some));
    set(&mut config.affinity, args.affinity.map(Some));
    set(&mut config.mode, args.mode);
    set(&mut config.top_objects, args.top_objects);
    set(&mut config.top_actions, args.top_actions);
    set(&mut config.object_weight, args.object_weight);
    config.validate()?;
    let ws = workspace(config)?;
    let model = if config.mode.uses_sentences() {
        let model = SentenceClassifier::load(required(&config.model, "model")?)?;
        check_model(&model, &ws)?;
        Some(model)
    } else {
        None
    };
    let g = if config.mode.uses_objects() {
        AffinityMatrix::load(required(&config.affinity, "affinity")?)?
    } else {
        load_affinity_for(config, &ws)?
    };
    // The affinity file is already pruned; keep all of it here.
    let sparsity = SparsityConfig {
        top_affinity: ws.object_vocab.len(),
        ..config.sparsity()
    }
    .clamped(ws.object_vocab.len(), ws.action_vocab.len());
    let predictions = classify_batch(&ws, model.as_ref(), &g, sparsity, config.mode, config.object_weight)?;
    let labels = &ws.action_vocab.labels;
    let header = ["video_id", "true_label", "predicted_label"]
        .into_iter()
        .map(String::from)
        .chain(labels.iter().cloned())
        .collect();
    let rows = predictions
        .iter()
        .map(|p| {
            [
                p.video_id.clone(),
                p.true_class.map(|z| labels[z].clone()).unwrap_or_default(),
                labels[p.predicted_class].clone(),
            ]
            .into_iter()
            .chain(p.scores.iter().map(f64::to_string))
            .collect()
        })
        .collect();
    write_csv(&args.out, header, rows)?;
    if let Some(acc) = crate::fusion::accuracy(&predictions) {
        info!("{} accuracy {acc:.4} over {} videos", config.mode, predictions.len());
    }
    write_sidecar(&args.out, config)
}

fn evaluate_cmd(config: &mut EngineConfig, args: EvaluateArgs) -> Result<()> {
    set(&mut config.workspace, args.workspace.map(Some));
    set(&mut config.runs, args.runs);
    set(&mut config.unseen, args.unseen.map(Some));
    set(&mut config.seed, args.seed);
    set(&mut config.mode, args.mode);
    set(&mut config.top_objects, args.top_objects);
    set(&mut config.top_actions, args.top_actions);
    set(&mut config.top_affinity, args.top_affinity);
    set(&mut config.epochs, args.epochs);
    set(&mut config.learning_rate, args.lr);
    set(&mut config.batch_size, args.batch);
    set(&mut config.object_weight, args.object_weight);
    set(&mut config.sentence_policy, args.sentence_policy);
    set(&mut config.model, args.model.map(Some));
    set(&mut config.affinity, args.affinity.map(Some));
    if args.shuffle_labels {
        config.shuffle_labels = true;
    }
    config.validate()?;
    let ws = workspace(config)?;
    let n_total = ws.action_vocab.len();
    let splits = match &args.split_file {
        Some(path) => SplitFile::read(path)?.to_splits(&ws.action_vocab, config.seed)?,
        None => generate_splits(n_total, config.unseen.unwrap_or(n_total), config.runs, config.seed)?,
    };
    let masked = match (config.sentence_policy, &config.model) {
        (PolicyKind::Masked, Some(path)) => {
            let model = SentenceClassifier::load(path)?;
            check_model(&model, &ws)?;
            Some(model)
        }
        _ => None,
    };
    let eval = config.eval(masked)?;
    let g = load_affinity_for(config, &ws)?;
    let stats = evaluate(&ws, &g, &splits, &eval)?;
    let mut echo = config.echo();
    if let (Some(map), Some(path)) = (echo.as_object_mut(), &args.split_file) {
        let names = SplitFile::read(path)?;
        map.insert(
            "split_file".into(),
            serde_json::to_value(names.class_lists()).expect("names serialize"),
        );
    }
    emit_report(&stats, &echo, &args.report)?;
    info!(
        "{} over {} runs: mean {:.4} +/- {:.4}",
        config.mode,
        stats.per_run_accuracy.len(),
        stats.mean,
        stats.stddev
    );
    Ok(())
}

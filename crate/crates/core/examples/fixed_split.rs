//! Evaluates one named split instead of random runs, and compares the two
//! sentence policies: retraining on the unseen classes versus restricting a
//! model trained on every class.

use zsar::evaluation::{SentencePolicy, SplitFile};
use zsar::{compute_affinity, evaluate, generate_fixture, train_on_vocab, EvalConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ws = generate_fixture(1, 50, 20, 32, 400)?;
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?;
    let split: SplitFile = serde_json::from_str(r#"["action_002", "action_005", "action_011", "action_017"]"#)?;
    let splits = split.to_splits(&ws.action_vocab, 0)?;

    let sparsity = zsar::SparsityConfig::default().fit(50, 4);
    let retrain = EvalConfig { sparsity, ..EvalConfig::default() };
    let everything = train_on_vocab(&ws.action_vocab, &TrainConfig::default())?;
    let masked = EvalConfig {
        sparsity,
        policy: SentencePolicy::Masked(everything),
        ..EvalConfig::default()
    };
    for (name, config) in [("retrain", retrain), ("masked", masked)] {
        let stats = evaluate(&ws, &g, &splits, &config)?;
        println!("{name:>8}: accuracy {:.4} on {} videos", stats.mean, stats.runs[0].videos);
    }
    Ok(())
}

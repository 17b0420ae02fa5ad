//! Classifies every video with each score source and compares accuracy.

use zsar::fusion::{accuracy, classify_batch};
use zsar::{compute_affinity, generate_fixture, train_on_vocab, Mode, SparsityConfig, TrainConfig};

fn main() -> zsar::Result<()> {
    let ws = generate_fixture(1, 10, 4, 16, 80)?;
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?;
    let model = train_on_vocab(&ws.action_vocab, &TrainConfig::default())?;
    let sparsity = SparsityConfig {
        top_objects: 5,
        top_actions: 2,
        top_affinity: 5,
    };
    for mode in [Mode::Objects, Mode::Sentences, Mode::Fused] {
        let predictions = classify_batch(&ws, Some(&model), &g, sparsity, mode, 1.0)?;
        println!("{mode:>9}: accuracy {:.3}", accuracy(&predictions).unwrap());
    }
    let p = &classify_batch(&ws, Some(&model), &g, sparsity, Mode::Fused, 1.0)?[0];
    let rounded: Vec<String> = p.scores.iter().map(|s| format!("{s:.3}")).collect();
    println!("{} fused scores [{}] -> {}", p.video_id, rounded.join(", "), ws.action_vocab.labels[p.predicted_class]);
    Ok(())
}

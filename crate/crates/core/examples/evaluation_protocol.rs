//! Repeated random-split evaluation: 50 runs, 10 of 20 actions unseen in
//! each, with a label-shuffled control. Writes reports to the directory
//! given as the first argument.

use zsar::{compute_affinity, emit_report, evaluate, generate_fixture, generate_splits, EvalConfig};

fn main() -> zsar::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/zsar-evaluation".into());
    let ws = generate_fixture(1, 50, 20, 32, 400)?;
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?;
    let splits = generate_splits(20, 10, 50, 0)?;

    let config = EvalConfig {
        sparsity: zsar::SparsityConfig::default().fit(50, 10),
        ..EvalConfig::default()
    };
    let stats = evaluate(&ws, &g, &splits, &config)?;
    println!(
        "fused: mean {:.4}, std {:.4}, se {:.4}",
        stats.mean,
        stats.stddev,
        stats.standard_error()
    );
    let control = evaluate(&ws, &g, &splits, &EvalConfig { shuffle_labels: true, ..config.clone() })?;
    println!("shuffled labels: mean {:.4} (chance 0.1)", control.mean);

    let worst = stats
        .per_class
        .iter()
        .map(|(z, runs)| (z, runs.iter().map(|r| r.accuracy).sum::<f64>() / runs.len() as f64, runs.len()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    println!("hardest class {} : {:.3} over {} runs", stats.class_labels[*worst.0], worst.1, worst.2);

    emit_report(&stats, &serde_json::json!({ "runs": 50, "unseen": 10 }), &out)?;
    println!("report in {out}");
    Ok(())
}

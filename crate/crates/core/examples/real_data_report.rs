//! Fused evaluation of a real-data workspace with every class unseen.
//!
//! ```text
//! cargo run --release --example real_data_report -- path/to/manifest.json [runs]
//! ```
//!
//! Without arguments it runs on a 101-class synthetic stand-in.

use zsar::{compute_affinity, evaluate, generate_fixture, generate_splits, load_workspace, EvalConfig};

fn main() -> zsar::Result<()> {
    let mut args = std::env::args().skip(1);
    let ws = match args.next() {
        Some(path) => load_workspace(path)?,
        None => generate_fixture(7, 300, 101, 32, 808)?,
    };
    let runs: usize = args.next().and_then(|r| r.parse().ok()).unwrap_or(1);
    let n = ws.action_vocab.len();
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?;
    let splits = generate_splits(n, n, runs, 0)?;
    let config = EvalConfig {
        sparsity: zsar::SparsityConfig::default().clamped(ws.object_vocab.len(), n),
        ..EvalConfig::default()
    };
    let stats = evaluate(&ws, &g, &splits, &config)?;
    println!(
        "0/{n} fused accuracy {:.1}% over {runs} run(s), {} videos",
        100.0 * stats.mean,
        stats.runs[0].videos
    );
    Ok(())
}

//! Object evidence for one video: mean frame logits, softmax, top-T
//! objects, then affinity-weighted action scores.

use zsar::{aggregate_video, compute_affinity, generate_fixture};

fn main() -> zsar::Result<()> {
    let ws = generate_fixture(1, 50, 20, 32, 40)?;
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?.sparsify(10)?;
    let video = &ws.videos[3];

    let p = aggregate_video(&video.frame_logits)?;
    let top = p.sparsify(5)?;
    let mut objects: Vec<(usize, f64)> = top.probs.iter().copied().enumerate().filter(|(_, v)| *v > 0.0).collect();
    objects.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("{} ({} frames)", video.video_id, video.frame_logits.rows());
    for (y, prob) in &objects {
        println!("  {} {prob:.4}", ws.object_vocab.labels[*y]);
    }

    let scores = top.action_scores(&g)?;
    let best = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
    println!(
        "best action {} ({:.4}); true {}",
        ws.action_vocab.labels[best],
        scores[best],
        ws.action_vocab.labels[video.true_label.unwrap()]
    );
    Ok(())
}

//! Trains the sentence classifier on class description sentences and scores
//! videos from their caption embeddings.

use zsar::{generate_fixture, train_on_vocab, TrainConfig};

fn main() -> zsar::Result<()> {
    let ws = generate_fixture(1, 50, 20, 32, 400)?;
    let model = train_on_vocab(&ws.action_vocab, &TrainConfig::default())?;
    let meta = model.training_meta.as_ref().unwrap();
    println!(
        "{} epochs: loss {:.4} -> {:.4}, training accuracy {:.3}",
        meta.epochs, meta.initial_loss, meta.final_loss, meta.final_accuracy
    );

    let mut correct = 0;
    for v in &ws.videos {
        let p = model.predict_video(&v.caption_rows())?.sparsify(5)?;
        let best = (0..p.probs.len()).max_by(|&a, &b| p.probs[a].total_cmp(&p.probs[b]).then(b.cmp(&a))).unwrap();
        correct += (Some(best) == v.true_label) as usize;
    }
    println!("caption accuracy over all 20 actions: {:.3}", correct as f64 / ws.videos.len() as f64);
    Ok(())
}

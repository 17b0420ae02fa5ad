//! Generates a synthetic workspace, saves it, and loads it back.
//!
//! ```text
//! cargo run --example fixture_workspace -- /tmp/zsar-fixture
//! ```

use zsar::{generate_fixture, load_workspace};

fn main() -> zsar::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/zsar-fixture".into());
    let ws = generate_fixture(1, 50, 20, 32, 400)?;
    let manifest = ws.save(&out)?;
    let loaded = load_workspace(&manifest)?;
    assert_eq!(loaded, ws);

    println!("manifest: {}", manifest.display());
    println!(
        "{} objects, {} actions, {} sentences, {} videos, dim {}",
        loaded.object_vocab.len(),
        loaded.action_vocab.len(),
        loaded.action_vocab.sentence_embeddings.rows(),
        loaded.videos.len(),
        loaded.meta.dim
    );
    let v = &loaded.videos[0];
    println!(
        "{}: {} frames, {} captions, label {}",
        v.video_id,
        v.frame_logits.rows(),
        v.caption_rows().len(),
        loaded.action_vocab.labels[v.true_label.unwrap()]
    );
    Ok(())
}

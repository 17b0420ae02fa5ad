//! Builds the object-action affinity matrix and prunes each action column
//! to its strongest objects.

use zsar::{compute_affinity, generate_fixture};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ws = generate_fixture(1, 50, 20, 32, 40)?;
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab)?;
    let pruned = g.sparsify(5)?;

    for z in 0..3 {
        let mut kept: Vec<(usize, f64)> = (0..g.objects())
            .filter(|&y| pruned.is_supported(y, z))
            .map(|y| (y, pruned.get(y, z)))
            .collect();
        kept.sort_by(|a, b| b.1.total_cmp(&a.1));
        let names: Vec<String> = kept
            .iter()
            .map(|(y, v)| format!("{} {v:.3}", g.object_labels[*y]))
            .collect();
        println!("{}: {}", g.action_labels[z], names.join(", "));
    }

    let dir = std::env::temp_dir().join("zsar-affinity-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("affinity.zsem");
    pruned.save(&path, None)?;
    let back = zsar::AffinityMatrix::load(&path)?;
    assert_eq!(back.sparsity_t, Some(5));
    println!("saved {} and {}", path.display(), zsar::affinity::metadata_path(&path).display());
    Ok(())
}

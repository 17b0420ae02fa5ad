mod common;

use std::fs;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zsar::objects::softmax;
use zsar::sentences::SentenceScoreVector;
use zsar::topk::sparsify_dense;
use zsar::{
    aggregate_video, classify, compute_affinity, generate_fixture, load_workspace, AffinityMatrix,
    EmbeddingMatrix, Mode, ObjectScoreVector, SentenceClassifier,
};

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(-5.0f64..5.0, 1..24),
        prop::collection::vec((-3i32..=3).prop_map(|v| v as f64 * 0.5), 1..24),
    ]
}

fn nonnegative() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(0.0f64..1.0, 1..24),
        prop::collection::vec((0i32..=3).prop_map(|v| v as f64 * 0.25), 1..24),
    ]
}

fn support(v: &[f64]) -> Vec<bool> {
    v.iter().map(|x| *x != 0.0).collect()
}

fn subset(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).all(|(x, y)| !x || *y)
}

fn affinity_from(m: usize, n: usize, v: Vec<f64>) -> AffinityMatrix {
    let labels = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect();
    AffinityMatrix::from_values(m, n, v, labels("o", m), labels("a", n)).unwrap()
}

proptest! {
    #[test]
    fn dense_sparsify_idempotent_and_monotone(v in nonnegative(), a in 1usize..24, b in 1usize..24) {
        let (lo, hi) = (a.min(b).min(v.len()), a.max(b).min(v.len()));
        let once = sparsify_dense(&v, lo);
        prop_assert_eq!(&sparsify_dense(&once, lo), &once);
        let wide = sparsify_dense(&v, hi);
        prop_assert!(subset(&support(&once), &support(&wide)));
        for (s, x) in once.iter().zip(&v) {
            prop_assert!(*s == 0.0 || s == x);
        }
    }

    #[test]
    fn affinity_sparsify_idempotent_and_monotone(
        m in 1usize..8,
        n in 1usize..6,
        seed in any::<u64>(),
        a in 1usize..8,
        b in 1usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = affinity_from(m, n, common::coarse(&mut rng, m * n));
        let (lo, hi) = (a.min(b).min(m), a.max(b).min(m));
        let once = g.sparsify(lo).unwrap();
        prop_assert_eq!(&once.sparsify(lo).unwrap(), &once);
        let wide = g.sparsify(hi).unwrap();
        for y in 0..m {
            for z in 0..n {
                prop_assert!(!once.is_supported(y, z) || wide.is_supported(y, z));
            }
        }
        for z in 0..n {
            prop_assert!((0..m).filter(|&y| once.is_supported(y, z)).count() == lo);
        }
        // Pruning twice with different thresholds equals pruning once with the smaller.
        let twice = wide.sparsify(lo).unwrap();
        prop_assert_eq!(twice.values(), once.values());
    }

    #[test]
    fn softmax_outputs_sum_to_one(v in prop::collection::vec(-700.0f64..700.0, 1..40)) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn object_and_sentence_sparsify_keep_values(v in values(), t in 1usize..24) {
        let t = t.min(v.len());
        let p = aggregate_video(&EmbeddingMatrix::from_rows(std::slice::from_ref(&v)).unwrap()).unwrap();
        let once = p.sparsify(t).unwrap();
        prop_assert_eq!(&once.sparsify(t).unwrap().probs, &once.probs);
        prop_assert_eq!(once.probs.iter().filter(|x| **x != 0.0).count(), t);
        let s = SentenceScoreVector { probs: p.probs.clone(), sparsity_t: None };
        let s_once = s.sparsify(t).unwrap();
        prop_assert_eq!(&s_once.probs, &once.probs);
        prop_assert_eq!(s_once.sparsify(t).unwrap().sparsity_t, Some(t));
    }

    #[test]
    fn fused_is_sum_of_parts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng, 10, 10);
        let g = affinity_from(inst.m, inst.n, common::gaussian(&mut rng, inst.m * inst.n, 0.5));
        let p_v = ObjectScoreVector { probs: softmax(&inst.frames[0]), sparsity_t: None };
        let p_s = SentenceScoreVector { probs: softmax(&inst.bias), sparsity_t: None };
        let fused = classify(&p_s, &p_v, &g, Mode::Fused).unwrap().scores;
        let objects = classify(&p_s, &p_v, &g, Mode::Objects).unwrap().scores;
        let sentences = classify(&p_s, &p_v, &g, Mode::Sentences).unwrap().scores;
        for z in 0..inst.n {
            prop_assert_eq!(fused[z], objects[z] + sentences[z]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn restricted_vocabulary_matches_selected_columns(
        seed in 0u64..1000,
        picks in prop::collection::btree_set(0usize..6, 1..6),
        t in 1usize..12,
    ) {
        let ws = generate_fixture(seed, 12, 6, 8, 6).unwrap();
        let classes: Vec<usize> = picks.into_iter().collect();
        let full = compute_affinity(&ws.object_vocab, &ws.action_vocab).unwrap();
        let restricted = compute_affinity(&ws.object_vocab, &ws.action_vocab.restrict(&classes).unwrap()).unwrap();
        prop_assert_eq!(&full.select_actions(&classes).unwrap(), &restricted);
        // Column pruning commutes with column selection.
        let t = t.min(12);
        let a = full.sparsify(t).unwrap().select_actions(&classes).unwrap();
        let b = restricted.sparsify(t).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn masked_model_restriction_renormalizes(seed in 0u64..1000, picks in prop::collection::btree_set(0usize..5, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, n) = (4, 5);
        let names = (0..n).map(|z| format!("c{z}")).collect();
        let model = SentenceClassifier::from_parts(d, n, common::gaussian(&mut rng, d * n, 1.0), vec![0.0; n], names).unwrap();
        let s = common::gaussian(&mut rng, d, 1.0);
        let full = model.predict(&s).unwrap();
        let classes: Vec<usize> = picks.into_iter().collect();
        let sub = full.restrict(&classes).unwrap();
        let mass: f64 = classes.iter().map(|&z| full.probs[z]).sum();
        prop_assert!((sub.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (i, &z) in classes.iter().enumerate() {
            prop_assert!((sub.probs[i] - full.probs[z] / mass).abs() <= 1e-15);
        }
    }

    #[test]
    fn corrupted_workspace_never_panics(file in 0usize..4, cut in 0usize..64, pos in 0usize..64, byte in any::<u8>()) {
        let dir = tempfile::tempdir().unwrap();
        let ws = generate_fixture(3, 4, 2, 3, 2).unwrap();
        let manifest = ws.save(dir.path()).unwrap();
        let target = match file {
            0 => dir.path().join("objects.zsem"),
            1 => dir.path().join("class_embeddings.zsem"),
            2 => dir.path().join("videos").join("00000.logits.zsem"),
            _ => manifest.clone(),
        };
        let original = fs::read(&target).unwrap();

        let mut flipped = original.clone();
        let at = pos % flipped.len();
        flipped[at] ^= byte | 1;
        fs::write(&target, &flipped).unwrap();
        if let Ok(loaded) = load_workspace(&manifest) {
            prop_assert!(file == 3 || at >= 13, "header corruption accepted: {loaded:?}");
        }

        let keep = cut % original.len();
        fs::write(&target, &original[..keep]).unwrap();
        prop_assert!(load_workspace(&manifest).is_err());
    }
}

#[test]
fn fixture_decomposes_exactly() {
    use zsar::fusion::{classify_batch, SparsityConfig};
    let ws = generate_fixture(1, 50, 20, 32, 400).unwrap();
    let g = compute_affinity(&ws.object_vocab, &ws.action_vocab).unwrap();
    let model = zsar::train_on_vocab(&ws.action_vocab, &zsar::TrainConfig { epochs: 20, ..Default::default() }).unwrap();
    let sparsity = SparsityConfig::default().fit(50, 20);
    let run = |mode| classify_batch(&ws, Some(&model), &g, sparsity, mode, 1.0).unwrap();
    let (fused, objects, sentences) = (run(Mode::Fused), run(Mode::Objects), run(Mode::Sentences));
    for ((f, o), s) in fused.iter().zip(&objects).zip(&sentences) {
        for z in 0..20 {
            assert_eq!(f.scores[z], o.scores[z] + s.scores[z], "{} class {z}", f.video_id);
        }
    }
}

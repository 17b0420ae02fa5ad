//! Shared oracles and generators for the integration tests and the
//! acceptance binary. The oracles are plain scalar loops that share no code
//! with the library beyond the input types.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zsar::fusion::SentenceSource;
use zsar::store::WorkspaceMeta;
use zsar::{
    compute_affinity, ActionVocabulary, EmbeddingMatrix, Mode, ObjectVocabulary, Pipeline,
    Prediction, SentenceClassifier, SparsityConfig, VideoRecord,
};

/// One video scored against a small random vocabulary.
#[derive(Debug, Clone)]
pub struct Instance {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    /// `frames x m`
    pub frames: Vec<Vec<f64>>,
    /// `k x d`, possibly empty
    pub captions: Vec<Vec<f64>>,
    /// `m x d`
    pub definitions: Vec<Vec<f64>>,
    /// `n x d`
    pub classes: Vec<Vec<f64>>,
    /// `d x n`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub top_objects: usize,
    pub top_actions: usize,
    pub top_affinity: usize,
    pub mode: Mode,
}

pub fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Values drawn from a small grid, so ties are common.
pub fn coarse(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-4i32..=4) as f64 * 0.25).collect()
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_m: usize, max_n: usize) -> Instance {
    let m = rng.random_range(1..=max_m);
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(1..=8);
    let frames = rng.random_range(1..=5);
    let k = rng.random_range(0..=3);
    let mode = [Mode::Objects, Mode::Sentences, Mode::Fused][rng.random_range(0..3)];
    let tied = rng.random_bool(0.2);
    let row = |rng: &mut ChaCha8Rng, len: usize, scale: f64| {
        if tied {
            coarse(rng, len)
        } else {
            gaussian(rng, len, scale)
        }
    };
    Instance {
        m,
        n,
        d,
        frames: (0..frames).map(|_| row(rng, m, 2.0)).collect(),
        captions: (0..k).map(|_| gaussian(rng, d, 1.0)).collect(),
        definitions: (0..m).map(|_| gaussian(rng, d, 1.0)).collect(),
        classes: (0..n).map(|_| gaussian(rng, d, 1.0)).collect(),
        weights: (0..d).map(|_| gaussian(rng, n, 1.0)).collect(),
        bias: gaussian(rng, n, 0.5),
        top_objects: rng.random_range(1..=m),
        top_actions: rng.random_range(1..=n),
        top_affinity: rng.random_range(1..=m),
        mode,
    }
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

/// Runs the instance through the library pipeline.
pub fn engine(inst: &Instance) -> Prediction {
    let objects = ObjectVocabulary::new(
        labels("o", inst.m),
        labels("definition ", inst.m),
        EmbeddingMatrix::from_rows(&inst.definitions).unwrap(),
    )
    .unwrap();
    let class_matrix = EmbeddingMatrix::from_rows(&inst.classes).unwrap();
    let actions = ActionVocabulary::new(
        labels("a", inst.n),
        (0..inst.n).map(|z| vec![format!("sentence {z}")]).collect(),
        class_matrix.clone(),
        class_matrix,
        (0..inst.n).collect(),
    )
    .unwrap();
    let affinity = compute_affinity(&objects, &actions).unwrap();
    let model = SentenceClassifier::from_parts(
        inst.d,
        inst.n,
        inst.weights.concat(),
        inst.bias.clone(),
        labels("a", inst.n),
    )
    .unwrap();
    let video = VideoRecord {
        video_id: "v".into(),
        frame_logits: EmbeddingMatrix::from_rows(&inst.frames).unwrap(),
        caption_embeddings: (!inst.captions.is_empty())
            .then(|| EmbeddingMatrix::from_rows(&inst.captions).unwrap()),
        true_label: None,
    };
    let sparsity = SparsityConfig {
        top_objects: inst.top_objects,
        top_actions: inst.top_actions,
        top_affinity: inst.top_affinity,
    };
    let source = Some(SentenceSource::Model(&model));
    Pipeline::new(source, &affinity, sparsity, inst.mode, 1.0)
        .unwrap()
        .classify_video(&video)
        .unwrap()
}

/// Entry `i` survives top-`t` if fewer than `t` entries outrank it. An
/// entry outranks another when it is larger, or equal with a lower index.
pub fn brute_keep(values: &[f64], t: usize, i: usize) -> bool {
    let outranked = (0..values.len())
        .filter(|&j| values[j] > values[i] || (values[j] == values[i] && j < i))
        .count();
    outranked < t
}

pub fn brute_softmax(x: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &v in x {
        if v > max {
            max = v;
        }
    }
    let mut e = Vec::new();
    let mut sum = 0.0;
    for &v in x {
        let ev = (v - max).exp();
        e.push(ev);
        sum += ev;
    }
    e.iter().map(|v| v / sum).collect()
}

fn brute_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Scalar reference for one video: scores per action and the argmax with
/// lowest-index ties.
pub fn brute_force(inst: &Instance) -> (Vec<f64>, usize) {
    let (m, n) = (inst.m, inst.n);

    let mut g = vec![vec![0.0; n]; m];
    for y in 0..m {
        for z in 0..n {
            g[y][z] = brute_cosine(&inst.definitions[y], &inst.classes[z]);
        }
    }
    for z in 0..n {
        let column: Vec<f64> = (0..m).map(|y| g[y][z]).collect();
        for y in 0..m {
            if !brute_keep(&column, inst.top_affinity, y) {
                g[y][z] = 0.0;
            }
        }
    }

    let mut mean = vec![0.0; m];
    for frame in &inst.frames {
        for y in 0..m {
            mean[y] += frame[y];
        }
    }
    for v in mean.iter_mut() {
        *v /= inst.frames.len() as f64;
    }
    let p_v = brute_softmax(&mean);
    let p_v: Vec<f64> = (0..m)
        .map(|y| if brute_keep(&p_v, inst.top_objects, y) { p_v[y] } else { 0.0 })
        .collect();
    let mut o = vec![0.0; n];
    for z in 0..n {
        for y in 0..m {
            o[z] += p_v[y] * g[y][z];
        }
    }

    let mut p_s = vec![0.0; n];
    if inst.captions.is_empty() {
        p_s = vec![1.0 / n as f64; n];
    } else {
        for s in &inst.captions {
            let mut h = inst.bias.clone();
            for z in 0..n {
                for i in 0..inst.d {
                    h[z] += s[i] * inst.weights[i][z];
                }
                h[z] = brute_gelu(h[z]);
            }
            let p = brute_softmax(&h);
            for z in 0..n {
                p_s[z] += p[z] / inst.captions.len() as f64;
            }
        }
    }
    let p_s: Vec<f64> = (0..n)
        .map(|z| if brute_keep(&p_s, inst.top_actions, z) { p_s[z] } else { 0.0 })
        .collect();

    let scores: Vec<f64> = match inst.mode {
        Mode::Objects => o,
        Mode::Sentences => p_s,
        Mode::Fused => (0..n).map(|z| p_s[z] + o[z]).collect(),
    };
    let mut best = 0;
    for z in 1..n {
        if scores[z] > scores[best] {
            best = z;
        }
    }
    (scores, best)
}

/// Largest absolute score difference, or `None` when the predicted classes
/// disagree.
pub fn oracle_gap(inst: &Instance) -> Option<f64> {
    let got = engine(inst);
    let (want, class) = brute_force(inst);
    if got.predicted_class != class {
        return None;
    }
    Some(
        got.scores
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    )
}

/// Random labeled sentence set in which every class has at least one row.
pub fn random_dataset(rng: &mut ChaCha8Rng, d: usize, n: usize) -> (EmbeddingMatrix, Vec<usize>) {
    let rows = n + rng.random_range(0..=2 * n);
    let mut labels: Vec<usize> = (0..n).collect();
    labels.extend((n..rows).map(|_| rng.random_range(0..n)));
    let data: Vec<Vec<f64>> = (0..rows).map(|_| gaussian(rng, d, 1.0)).collect();
    (EmbeddingMatrix::from_rows(&data).unwrap(), labels)
}

/// Largest relative difference between analytic and central-difference
/// gradients, measured as `|a - f| / max(|a|, |f|, floor)`.
pub fn gradient_gap(seed: u64, step: f64, floor: f64) -> f64 {
    use zsar::sentences::Dataset;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=8);
    let n = rng.random_range(1..=8);
    let (embeddings, labels) = random_dataset(&mut rng, d, n);
    let data = Dataset {
        embeddings: &embeddings,
        labels: &labels,
        classes: n,
    };
    let names: Vec<String> = (0..n).map(|z| format!("c{z}")).collect();
    let weights = gaussian(&mut rng, d * n, 0.7);
    let bias = gaussian(&mut rng, n, 0.3);
    let model = SentenceClassifier::from_parts(d, n, weights.clone(), bias.clone(), names.clone()).unwrap();
    let (_, grad) = model.loss_and_gradient(&data);

    let loss_at = |w: &[f64], b: &[f64]| {
        SentenceClassifier::from_parts(d, n, w.to_vec(), b.to_vec(), names.clone())
            .unwrap()
            .loss(&data)
    };
    let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(floor);
    let mut worst: f64 = 0.0;
    for i in 0..weights.len() {
        let (mut up, mut down) = (weights.clone(), weights.clone());
        up[i] += step;
        down[i] -= step;
        let fd = (loss_at(&up, &bias) - loss_at(&down, &bias)) / (2.0 * step);
        worst = worst.max(rel(grad.weights[i], fd));
    }
    for j in 0..bias.len() {
        let (mut up, mut down) = (bias.clone(), bias.clone());
        up[j] += step;
        down[j] -= step;
        let fd = (loss_at(&weights, &up) - loss_at(&weights, &down)) / (2.0 * step);
        worst = worst.max(rel(grad.bias[j], fd));
    }
    worst
}

pub fn fixture_meta(dim: usize) -> WorkspaceMeta {
    WorkspaceMeta {
        format_version: zsar::store::MANIFEST_VERSION,
        dim,
        class_embedding: zsar::store::CLASS_EMBEDDING_MEAN.into(),
    }
}

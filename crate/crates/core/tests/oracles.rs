use std::hash::Hasher;

use mdr_core::data::{Corpus, Passage, TrainingPair};
use mdr_core::embedding::{
    bucket_of, embed_corpus, featurize, fnv1a64, FeaturizerConfig, LinearEncoder, SparseVector,
};
use mdr_core::evaluation::rank_diagnostics;
use mdr_core::rng::SplitMix64;
use mdr_core::synthetic::{generate_synthetic_benchmark, SyntheticConfig};
use mdr_core::training::{example_gradient, sample_negative_index, train_encoder, TrainConfig};

fn fnv_reference(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[test]
fn fnv_matches_reference_crate() {
    for word in ["", "a", "apple", "Apple", "multi", "distribution", "z9z9z9", "0123456789"] {
        assert_eq!(fnv1a64(word.as_bytes()), fnv_reference(word.as_bytes()), "{word}");
    }
    let mut rng = SplitMix64::new(3);
    for _ in 0..200 {
        let len = rng.next_index(40);
        let bytes: Vec<u8> = (0..len).map(|_| rng.next_u64() as u8).collect();
        assert_eq!(fnv1a64(&bytes), fnv_reference(&bytes));
    }
}

#[test]
fn apple_bucket_golden_value() {
    let expected = (fnv_reference(b"apple") % 32768) as u32;
    assert_eq!(bucket_of("apple", 32768), expected);
    assert_eq!(fnv_reference(b"apple"), 0xf74a_62a4_58be_fdbf);
    assert_eq!(bucket_of("apple", 32768), 32_191);
}

/// Dense f64 re-implementation of the loss, used only as a finite-difference
/// target.
fn dense_loss(w: &[f64], d: usize, nb: usize, q: &[f64], p: &[f64], n: &[f64]) -> f64 {
    let project = |x: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|r| (0..nb).map(|c| w[r * nb + c] * x[c]).sum())
            .collect()
    };
    let (u, vp, vn) = (project(q), project(p), project(n));
    let s_pos: f64 = u.iter().zip(&vp).map(|(a, b)| a * b).sum();
    let s_neg: f64 = u.iter().zip(&vn).map(|(a, b)| a * b).sum();
    // log(1 + exp(s_neg - s_pos)), direct form; inputs here are small.
    (1.0 + (s_neg - s_pos).exp()).ln()
}

fn random_sparse(rng: &mut SplitMix64, nb: usize) -> SparseVector {
    let mut indices: Vec<u32> = (0..nb as u32).filter(|_| rng.next_index(2) == 0).collect();
    if indices.is_empty() {
        indices.push(rng.next_index(nb) as u32);
    }
    let values = indices.iter().map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    SparseVector { indices, values }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest norm-wise relative error between analytic and central-difference
/// gradients over `instances` random encoders with d=3 and 8 buckets.
fn worst_gradient_error(instances: u64, h: f64) -> f64 {
    let (d, nb) = (3, 8);
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let enc = LinearEncoder::init(FeaturizerConfig::with_buckets(nb as u32), d, seed).unwrap();
        let mut rng = SplitMix64::new(1000 + seed);
        let (q, p, n) = (random_sparse(&mut rng, nb), random_sparse(&mut rng, nb), random_sparse(&mut rng, nb));
        let (_, grad) = example_gradient(&enc, &q, &p, &n);
        let analytic = grad.to_dense(nb);

        let mut w: Vec<f64> = enc.weights().iter().map(|&x| f64::from(x)).collect();
        let (qd, pd, nd) = (q.to_dense(nb), p.to_dense(nb), n.to_dense(nb));
        let mut numeric = vec![0.0; w.len()];
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + h;
            let up = dense_loss(&w, d, nb, &qd, &pd, &nd);
            w[i] = orig - h;
            let down = dense_loss(&w, d, nb, &qd, &pd, &nd);
            w[i] = orig;
            numeric[i] = (up - down) / (2.0 * h);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(norm(&diff) / scale);
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let err = worst_gradient_error(100, 1e-3);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn negative_sampling_is_uniform() {
    let (len, exclude, draws) = (10usize, 4usize, 100_000usize);
    let mut counts = vec![0usize; len];
    let mut rng = SplitMix64::new(42);
    for _ in 0..draws {
        counts[sample_negative_index(&mut rng, len, exclude)] += 1;
    }
    assert_eq!(counts[exclude], 0);
    let p = 1.0 / (len - 1) as f64;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate().filter(|&(i, _)| i != exclude) {
        assert!((c as f64 - expected).abs() < 3.0 * sigma, "bucket {i}: {c} vs {expected}");
    }
}

fn synthetic_encoder(config: &TrainConfig) -> (LinearEncoder, mdr_core::training::TrainReport) {
    let b = generate_synthetic_benchmark(&SyntheticConfig::default()).unwrap();
    let init = LinearEncoder::init(FeaturizerConfig::default(), LinearEncoder::DEFAULT_OUT_DIM, 0).unwrap();
    train_encoder(&b.train_a, &b.corpus_a, init, config).unwrap()
}

#[test]
fn training_reduces_loss_on_synthetic_benchmark() {
    let (_, report) = synthetic_encoder(&TrainConfig::default());
    assert_eq!(report.epoch_losses.len(), 10);
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0], "{:?}", report.epoch_losses);
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let (a, ra) = synthetic_encoder(&cfg);
    let (b, rb) = synthetic_encoder(&cfg);
    assert_eq!(ra, rb);
    assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let corpus = Corpus::new(
        "A",
        vec![Passage::new("p0", "red apple"), Passage::new("p1", "blue sky"), Passage::new("p2", "green tea")],
    )
    .unwrap();
    let pairs = vec![TrainingPair {
        query_text: "apple".into(),
        positive_passage_id: "p0".into(),
        corpus_id: "A".into(),
    }];
    let init = LinearEncoder::init(FeaturizerConfig::with_buckets(64), 4, 9).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..Default::default()
    };
    let (trained, report) = train_encoder(&pairs, &corpus, init.clone(), &cfg).unwrap();
    assert_eq!(trained, init);
    assert_eq!(report.checksum, init.checksum());
}

#[test]
fn featurizer_examples() {
    let cfg = FeaturizerConfig::default();
    let v = featurize("Apple apple", &cfg);
    assert_eq!(v.indices.len(), 1);
    assert_eq!(v.values, [1.0]);
    assert!(featurize("", &cfg).is_empty());
    assert!(featurize("!!! ---", &cfg).is_empty());
    let two = featurize("red, blue", &cfg);
    assert!((two.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn rank_diagnostics_report_trained_and_untrained_encoders() {
    let b = generate_synthetic_benchmark(&SyntheticConfig::default()).unwrap();
    let init = LinearEncoder::init(FeaturizerConfig::default(), LinearEncoder::DEFAULT_OUT_DIM, 0).unwrap();
    let (trained, _) = train_encoder(&b.train_a, &b.corpus_a, init.clone(), &TrainConfig::default()).unwrap();
    for enc in [&init, &trained] {
        let ms = [embed_corpus(enc, &b.corpus_a), embed_corpus(enc, &b.corpus_b)];
        let d = rank_diagnostics(&b.queries, &ms, enc).unwrap();
        assert_eq!(d.records.len(), 200);
        assert!(d
            .records
            .iter()
            .all(|r| r.rank >= 1 && r.normalized_rank > 0.0 && r.normalized_rank <= 1.0));
        assert_eq!(d.histogram("A", 10).iter().sum::<usize>(), 100);
    }
}

/// Training should pull known-corpus golds up the full ranking. On the
/// synthetic benchmark it does not: training pairs are distractor passages
/// that share filler vocabulary with the test golds, and the trained encoder
/// ranks those distractors above the golds. Kept as a measurement.
#[test]
#[ignore = "fails on the synthetic benchmark; run with --ignored to measure"]
fn training_lowers_known_corpus_median_rank() {
    let b = generate_synthetic_benchmark(&SyntheticConfig::default()).unwrap();
    let init = LinearEncoder::init(FeaturizerConfig::default(), LinearEncoder::DEFAULT_OUT_DIM, 0).unwrap();
    let (trained, _) = train_encoder(&b.train_a, &b.corpus_a, init.clone(), &TrainConfig::default()).unwrap();
    let median = |enc: &LinearEncoder| {
        let ms = [embed_corpus(enc, &b.corpus_a), embed_corpus(enc, &b.corpus_b)];
        rank_diagnostics(&b.queries, &ms, enc).unwrap().median_normalized_rank("A").unwrap()
    };
    let (before, after) = (median(&init), median(&trained));
    println!("known-corpus median normalized rank: untrained {before:.4}, trained {after:.4}");
    assert!(before > after);
}

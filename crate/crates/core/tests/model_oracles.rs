use std::collections::HashMap;

use cadenza_core::anticipate::Vocabulary;
use cadenza_core::model::{
    load_checkpoint, masked_distribution, save_checkpoint, train_transformer, CheckpointError,
    LoadedModel, NGramModel, SequenceModel, TinyTransformer, TinyTransformerConfig, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(context: usize, vocab: usize, seed: u64) -> TinyTransformer {
    let cfg = TinyTransformerConfig {
        layers: 2,
        heads: 2,
        model_dim: 64,
        context_length: context,
        vocab_size: vocab,
    };
    TinyTransformer::new(cfg, seed).unwrap()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut model = tiny(12, 30, 17);
    let tokens = [3u32, 7, 1, 29, 7, 3, 12, 0, 5];
    let (_, _, grad) = model.loss_and_grad(&tokens, false);
    let live: Vec<usize> = model
        .live_parameter_ranges(tokens.len() - 1)
        .into_iter()
        .flatten()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = live[rng.random_range(0..live.len())];
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let (plus, _) = model.loss(&tokens, false);
        model.params_mut()[i] = orig - h;
        let (minus, _) = model.loss(&tokens, false);
        model.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-7);
        let rel = (grad[i] - numeric).abs() / scale;
        worst = worst.max(rel);
        assert!(
            rel <= 1e-3,
            "param {i}: analytic {} numeric {numeric} rel {rel}",
            grad[i]
        );
    }
    eprintln!("worst relative gradient error {worst:.2e}");
}

#[test]
fn events_only_gradient_matches_too() {
    let mut model = tiny(8, 4771, 2);
    let tokens = [4768u32, 2390, 3500, 4500, 10, 1050, 2060];
    let (loss, count, grad) = model.loss_and_grad(&tokens, true);
    assert_eq!(count, 3);
    assert_eq!(model.loss(&tokens, true), (loss, count));
    let i = 2390 * 64 + 5;
    let orig = model.params()[i];
    let h = 1e-5;
    model.params_mut()[i] = orig + h;
    let (plus, _) = model.loss(&tokens, true);
    model.params_mut()[i] = orig - h;
    let (minus, _) = model.loss(&tokens, true);
    let numeric = (plus - minus) / (2.0 * h);
    assert!((grad[i] - numeric).abs() <= 1e-3 * grad[i].abs().max(numeric.abs()).max(1e-7));
}

#[test]
fn training_is_reproducible() {
    let data = vec![vec![1u32, 2, 3, 4, 5, 6], vec![6, 5, 4, 3, 2, 1]];
    let cfg = TrainConfig {
        steps: 5,
        batch_size: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ra) = train_transformer(tiny(8, 10, 1), &data, &data, &cfg).unwrap();
    let (b, rb) = train_transformer(tiny(8, 10, 1), &data, &data, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(ra.loss_curve, rb.loss_curve);
    assert_eq!(ra.loss_curve.len(), 5);
    assert_eq!(a.model_version(), b.model_version());
}

/// Conditional counts by an independent scan: every window of `order`
/// tokens, plus shorter windows anchored at the sequence start.
fn brute_force_counts(corpus: &[Vec<u32>], order: usize) -> HashMap<Vec<u32>, HashMap<u32, u64>> {
    let mut out: HashMap<Vec<u32>, HashMap<u32, u64>> = HashMap::new();
    for seq in corpus {
        for end in 1..seq.len() {
            let start = end.saturating_sub(order - 1);
            *out.entry(seq[start..end].to_vec())
                .or_default()
                .entry(seq[end])
                .or_default() += 1;
        }
    }
    out
}

fn toy_corpus(songs: usize, vocab: u32, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..songs)
        .map(|_| {
            let len = rng.random_range(5..40);
            // skewed draws so contexts repeat
            (0..len)
                .map(|_| (rng.random_range(0..vocab) * rng.random_range(0..vocab)) % vocab)
                .collect()
        })
        .collect()
}

#[test]
fn ngram_matches_brute_force_scan() {
    let vocab = 24usize;
    let corpus = toy_corpus(20, vocab as u32, 77);
    let k = 0.01;
    let mut model = NGramModel::new(3, k, vocab);
    model.fit(&corpus);
    let counts = brute_force_counts(&corpus, 3);
    for (ctx, next_counts) in &counts {
        let total: u64 = next_counts.values().sum();
        let exact = model.unsmoothed(ctx).unwrap();
        assert_eq!(exact.len(), next_counts.len());
        for (tok, &c) in next_counts {
            assert_eq!(exact[tok], c as f64 / total as f64);
        }
        let logits = model.next_token_logits(ctx);
        for tok in 0..vocab as u32 {
            let c = next_counts.get(&tok).copied().unwrap_or(0) as f64;
            let want = (c + k) / (total as f64 + k * vocab as f64);
            assert!((logits[tok as usize].exp() - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn checkpoint_roundtrip_on_probe_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::default();
    let model = TinyTransformer::new(
        TinyTransformerConfig {
            context_length: 32,
            ..Default::default()
        },
        11,
    )
    .unwrap();
    let path = dir.path().join("tiny.ckpt");
    save_checkpoint(&model.clone().into(), &vocab, &path).unwrap();
    let loaded = load_checkpoint(&path, &vocab).unwrap();
    assert_eq!(loaded.model_version(), model.model_version());
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let len = rng.random_range(1..40);
        let prefix: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..vocab.size() as u32))
            .collect();
        let a = model.next_token_logits(&prefix);
        let b = loaded.next_token_logits(&prefix);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6));
    }

    let mut ngram = NGramModel::new(3, 0.01, vocab.size());
    ngram.fit(&toy_corpus(5, 200, 1));
    let npath = dir.path().join("ngram.ckpt");
    save_checkpoint(&ngram.clone().into(), &vocab, &npath).unwrap();
    assert_eq!(
        load_checkpoint(&npath, &vocab).unwrap(),
        LoadedModel::NGram(ngram)
    );
}

#[test]
fn wrong_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = TinyTransformer::new(
        TinyTransformerConfig {
            context_length: 8,
            ..Default::default()
        },
        0,
    )
    .unwrap();
    save_checkpoint(
        &model.into(),
        &Vocabulary {
            anticipation_s: 4.0,
        },
        &path,
    )
    .unwrap();
    let err = load_checkpoint(&path, &Vocabulary::default()).unwrap_err();
    assert!(
        matches!(
            err,
            CheckpointError::VocabularyMismatch {
                format_version: 1,
                ..
            }
        ),
        "{err}"
    );
}

proptest! {
    #[test]
    fn ngram_distributions_sum_to_one(seed in 0u64..500, prefix in prop::collection::vec(0u32..24, 0..6)) {
        let mut model = NGramModel::new(3, 0.01, 24);
        model.fit(&toy_corpus(4, 24, seed));
        let total: f64 = model.next_token_logits(&prefix).iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn masked_softmax_normalizes(
        logits in prop::collection::vec(-30.0f64..30.0, 2..64),
        modulus in 1u32..5,
        temperature in prop_oneof![Just(0.0), 0.05f64..3.0],
    ) {
        let dist = masked_distribution(&logits, |t| t % modulus == 0, temperature);
        let total: f64 = dist.iter().map(|d| d.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-6);
        prop_assert!(dist.iter().all(|d| d.0 % modulus == 0));
    }

    #[test]
    fn transformer_logits_finite_and_stable(prefix in prop::collection::vec(0u32..40, 1..20)) {
        let model = tiny(16, 40, 8);
        let a = model.next_token_logits(&prefix);
        prop_assert!(a.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, model.next_token_logits(&prefix));
    }
}

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelError, NGramModel, SequenceModel, TinyTransformer};
use crate::anticipate::ExampleRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub heldout_fraction: f64,
    /// Count only event tokens (not anticipated controls) in the loss.
    pub events_only_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_size: 8,
            learning_rate: 3e-3,
            warmup_steps: 10,
            weight_decay: 0.01,
            grad_clip: 1.0,
            seed: 0,
            heldout_fraction: 0.1,
            events_only_loss: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-token training loss of each step's batch, before the update.
    pub loss_curve: Vec<f64>,
    pub heldout_nll: Option<f64>,
    pub train_sequences: usize,
    pub heldout_sequences: usize,
    pub elapsed_seconds: f64,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.loss_curve.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

/// Keep the last `max_len` tokens.
pub fn truncate_left(tokens: &[u32], max_len: usize) -> &[u32] {
    &tokens[tokens.len().saturating_sub(max_len)..]
}

/// Split examples by song so no song contributes to both sides. Songs are
/// ranked by a seeded hash of their id; the first `floor(songs * fraction)`
/// are held out.
pub fn split_heldout(
    records: &[ExampleRecord],
    fraction: f64,
    seed: u64,
) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut songs: Vec<&str> = records.iter().map(|r| r.song_id.as_str()).collect();
    songs.sort_unstable();
    songs.dedup();
    let rank = |id: &str| {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(id.as_bytes());
        h.finalize()
    };
    songs.sort_by_cached_key(|id| rank(id));
    let held = ((songs.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    let held = held.min(songs.len().saturating_sub(1));
    let heldout_ids: std::collections::HashSet<&str> = songs[..held].iter().copied().collect();
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for r in records {
        if heldout_ids.contains(r.song_id.as_str()) {
            heldout.push(r.tokens.clone());
        } else {
            train.push(r.tokens.clone());
        }
    }
    (train, heldout)
}

/// Per-token negative log-likelihood (nats) over all sequences.
pub fn mean_nll<M: SequenceModel + ?Sized, S: AsRef<[u32]> + Sync>(
    model: &M,
    sequences: &[S],
) -> f64 {
    let (total, count) = sequences
        .par_iter()
        .map(|s| model.sequence_nll(s.as_ref()))
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0usize), |(t, c), (nll, n)| (t + nll, c + n));
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}

pub fn train_ngram<S: AsRef<[u32]>>(
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    sequences: &[S],
) -> Result<NGramModel, ModelError> {
    if sequences.iter().all(|s| s.as_ref().len() < 2) {
        return Err(ModelError::DatasetEmpty);
    }
    let mut model = NGramModel::new(order, smoothing, vocab_size);
    model.fit(sequences);
    Ok(model)
}

fn learning_rate(cfg: &TrainConfig, step: usize) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.learning_rate * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
    let progress = (step - cfg.warmup_steps) as f64 / span;
    let floor = 0.1 * cfg.learning_rate;
    floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// AdamW on the mean per-token cross-entropy of random minibatches.
///
/// Batches are drawn with replacement from `train_set` by a ChaCha generator
/// seeded with `cfg.seed`; batch gradients are summed in batch order, so the
/// result does not depend on thread scheduling.
pub fn train_transformer(
    mut model: TinyTransformer,
    train_set: &[Vec<u32>],
    heldout: &[Vec<u32>],
    cfg: &TrainConfig,
) -> Result<(TinyTransformer, TrainReport), ModelError> {
    let train_set: Vec<&[u32]> = train_set
        .iter()
        .map(|s| truncate_left(s, model.config().context_length + 1))
        .filter(|s| s.len() >= 2)
        .collect();
    if train_set.is_empty() {
        return Err(ModelError::DatasetEmpty);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Config("batch_size must be positive".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = model.parameter_count();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.99, 1e-8);
    let mut loss_curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch: Vec<&[u32]> = (0..cfg.batch_size)
            .map(|_| train_set[rng.random_range(0..train_set.len())])
            .collect();
        let results: Vec<(f64, usize, Vec<f64>)> = batch
            .par_iter()
            .map(|s| model.loss_and_grad(s, cfg.events_only_loss))
            .collect();
        let count: usize = results.iter().map(|r| r.1).sum();
        if count == 0 {
            loss_curve.push(0.0);
            continue;
        }
        let loss = results.iter().map(|r| r.0).sum::<f64>() / count as f64;
        let mut grad = vec![0.0; n];
        for (_, _, g) in &results {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let inv = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !norm.is_finite() {
            model.refresh_version();
            return Err(ModelError::DivergenceDetected {
                step,
                last_good: Box::new(model),
            });
        }
        loss_curve.push(loss);
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            let s = cfg.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }

        let lr = learning_rate(cfg, step);
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (((p, g), m), v) in model
            .params_mut()
            .iter_mut()
            .zip(&grad)
            .zip(&mut m)
            .zip(&mut v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * ((*m / c1) / ((*v / c2).sqrt() + eps) + cfg.weight_decay * *p);
        }
    }
    model.refresh_version();

    let heldout_nll = if heldout.is_empty() {
        None
    } else {
        Some(mean_nll(&model, heldout))
    };
    let report = TrainReport {
        loss_curve,
        heldout_nll,
        train_sequences: train_set.len(),
        heldout_sequences: heldout.len(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

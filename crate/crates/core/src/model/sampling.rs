use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, SequenceModel};

/// Temperature and nucleus settings. `temperature == 0` decodes greedily.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPolicy {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy {
            temperature: 1.0,
            top_p: 0.95,
        }
    }
}

impl SamplingPolicy {
    pub fn greedy() -> Self {
        SamplingPolicy {
            temperature: 0.0,
            top_p: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        Ok(())
    }
}

/// Softmax of the allowed logits at `temperature`, as `(token, probability)`
/// sorted by decreasing probability (ties by token id).
pub fn masked_distribution(
    logits: &[f64],
    allowed: impl Fn(u32) -> bool,
    temperature: f64,
) -> Vec<(u32, f64)> {
    let candidates: Vec<(u32, f64)> = logits
        .iter()
        .enumerate()
        .filter(|&(t, l)| allowed(t as u32) && l.is_finite())
        .map(|(t, &l)| (t as u32, l))
        .collect();
    if candidates.is_empty() {
        return candidates;
    }
    let max = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut dist: Vec<(u32, f64)> = if temperature == 0.0 {
        // limit of the tempered softmax: uniform over the maxima
        let top: Vec<u32> = candidates
            .iter()
            .filter(|c| c.1 == max)
            .map(|c| c.0)
            .collect();
        let p = 1.0 / top.len() as f64;
        top.into_iter().map(|t| (t, p)).collect()
    } else {
        let weights: Vec<(u32, f64)> = candidates
            .iter()
            .map(|&(t, l)| (t, ((l - max) / temperature).exp()))
            .collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        weights.into_iter().map(|(t, w)| (t, w / total)).collect()
    };
    dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    dist
}

/// Draw one token with disallowed logits removed.
///
/// Greedy decoding picks the lowest-id maximum. Otherwise the tempered
/// distribution is cut to the smallest prefix whose mass reaches `top_p`,
/// renormalized, and sampled.
pub fn sample_token<R: Rng + ?Sized>(
    logits: &[f64],
    allowed: impl Fn(u32) -> bool,
    policy: &SamplingPolicy,
    rng: &mut R,
    position: usize,
) -> Result<u32, ModelError> {
    let dist = masked_distribution(logits, allowed, policy.temperature);
    if dist.is_empty() {
        return Err(ModelError::MaskEmpty { position });
    }
    if policy.temperature == 0.0 {
        return Ok(dist.iter().map(|d| d.0).min().expect("nonempty"));
    }
    let mut kept = 0;
    let mut mass = 0.0;
    for (_, p) in &dist {
        kept += 1;
        mass += p;
        if mass >= policy.top_p {
            break;
        }
    }
    let nucleus = &dist[..kept];
    let u: f64 = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    for &(t, p) in nucleus {
        acc += p;
        if u < acc {
            return Ok(t);
        }
    }
    Ok(nucleus[kept - 1].0)
}

/// Sample a `(time, duration, note)` triple after `prefix`. `mask(position,
/// partial, token)` says whether `token` may follow the already sampled
/// `partial` tokens of this triple.
pub fn sample_note_triple<M, R, F>(
    model: &M,
    prefix: &[u32],
    policy: &SamplingPolicy,
    mask: F,
    rng: &mut R,
) -> Result<[u32; 3], ModelError>
where
    M: SequenceModel + ?Sized,
    R: Rng + ?Sized,
    F: Fn(usize, &[u32], u32) -> bool,
{
    let mut context = prefix.to_vec();
    let mut triple = [0u32; 3];
    for position in 0..3 {
        let logits = model.next_token_logits(&context);
        let partial = triple[..position].to_vec();
        let token = sample_token(
            &logits,
            |t| mask(position, &partial, t),
            policy,
            rng,
            position,
        )?;
        triple[position] = token;
        context.push(token);
    }
    Ok(triple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed(Vec<f64>);

    impl SequenceModel for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn context_length(&self) -> usize {
            8
        }
        fn next_token_logits(&self, _prefix: &[u32]) -> Vec<f64> {
            self.0.clone()
        }
        fn model_version(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn greedy_takes_allowed_argmax() {
        let logits = [0.1, 3.0, 2.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = SamplingPolicy::greedy();
        assert_eq!(sample_token(&logits, |_| true, &g, &mut rng, 0).unwrap(), 1);
        assert_eq!(
            sample_token(&logits, |t| t != 1, &g, &mut rng, 0).unwrap(),
            3
        );
        assert_eq!(
            sample_token(&logits, |t| t == 0, &g, &mut rng, 0).unwrap(),
            0
        );
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_token(
            &[1.0, 2.0],
            |_| false,
            &SamplingPolicy::default(),
            &mut rng,
            2,
        );
        assert!(matches!(r, Err(ModelError::MaskEmpty { position: 2 })));
    }

    #[test]
    fn forced_triple_ignores_logits() {
        let model = Fixed(vec![5.0, -1.0, 0.0, 2.0, 1.0, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let want = [1u32, 2, 4];
        let triple = sample_note_triple(
            &model,
            &[0],
            &SamplingPolicy::default(),
            |p, _, t| t == want[p],
            &mut rng,
        )
        .unwrap();
        assert_eq!(triple, want);
    }

    #[test]
    fn empirical_frequencies_match() {
        // P(0) = 0.9, P(1) = 0.1
        let logits = [0.9f64.ln(), 0.1f64.ln()];
        let policy = SamplingPolicy {
            temperature: 1.0,
            top_p: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| sample_token(&logits, |_| true, &policy, &mut rng, 0).unwrap() == 0)
            .count();
        let f = zeros as f64 / n as f64;
        assert!((f - 0.9).abs() <= 0.02, "{f}");
    }

    #[test]
    fn nucleus_truncates_tail() {
        let logits = [0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()];
        let policy = SamplingPolicy {
            temperature: 1.0,
            top_p: 0.85,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            assert_ne!(
                sample_token(&logits, |_| true, &policy, &mut rng, 0).unwrap(),
                2
            );
        }
    }

    #[test]
    fn masked_distribution_normalizes() {
        let logits: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        for temp in [0.0, 0.5, 1.0, 2.0] {
            let d = masked_distribution(&logits, |t| t % 3 != 0, temp);
            let total: f64 = d.iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(d.iter().all(|x| x.0 % 3 != 0));
        }
    }
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SequenceModel;

type Counts = HashMap<Vec<u32>, HashMap<u32, u64>>;

/// Add-k smoothed n-gram model.
///
/// The context is the previous `order - 1` tokens, or fewer at the start of
/// a sequence. `P(x | ctx) = (count(ctx, x) + k) / (count(ctx) + k * V)`;
/// unseen contexts are uniform.
///
/// With backoff enabled, an unseen context is replaced by its longest
/// suffix seen anywhere in the corpus, smoothed the same way. Seen contexts
/// are unaffected.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    counts: Counts,
    totals: HashMap<Vec<u32>, u64>,
    backoff: bool,
    /// Suffix counts by context length `0..order - 1`, over every position
    /// with at least that many preceding tokens. Empty without backoff.
    suffixes: Vec<(Counts, HashMap<Vec<u32>, u64>)>,
    version: String,
}

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_SMOOTHING: f64 = 0.01;

#[derive(Serialize, Deserialize)]
pub(crate) struct NGramTables {
    pub order: usize,
    pub smoothing: f64,
    pub vocab_size: usize,
    #[serde(default)]
    pub backoff: bool,
    /// `(context, next, count)`, sorted.
    pub entries: Vec<(Vec<u32>, u32, u64)>,
}

impl NGramModel {
    pub fn new(order: usize, smoothing: f64, vocab_size: usize) -> Self {
        assert!(order >= 1);
        assert!(smoothing > 0.0);
        let mut m = NGramModel {
            order,
            smoothing,
            vocab_size,
            counts: HashMap::new(),
            totals: HashMap::new(),
            backoff: false,
            suffixes: Vec::new(),
            version: String::new(),
        };
        m.refresh();
        m
    }

    /// Enable or disable backoff to shorter seen contexts.
    pub fn with_backoff(mut self, backoff: bool) -> Self {
        self.backoff = backoff;
        self.refresh();
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn backoff(&self) -> bool {
        self.backoff
    }

    /// Count every (context, next) pair of every sequence.
    pub fn fit<S: AsRef<[u32]>>(&mut self, sequences: &[S]) {
        for seq in sequences {
            let seq = seq.as_ref();
            for i in 1..seq.len() {
                let ctx = &seq[i.saturating_sub(self.order - 1)..i];
                match self.counts.get_mut(ctx) {
                    Some(m) => *m.entry(seq[i]).or_default() += 1,
                    None => {
                        self.counts
                            .insert(ctx.to_vec(), HashMap::from([(seq[i], 1)]));
                    }
                }
                match self.totals.get_mut(ctx) {
                    Some(t) => *t += 1,
                    None => {
                        self.totals.insert(ctx.to_vec(), 1);
                    }
                }
            }
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        self.suffixes.clear();
        if self.backoff {
            // every position with at least `len` preceding tokens is stored
            // under a context whose last `len` tokens are that suffix
            for len in 0..self.order - 1 {
                let mut counts: Counts = HashMap::new();
                let mut totals: HashMap<Vec<u32>, u64> = HashMap::new();
                for (ctx, next) in &self.counts {
                    if ctx.len() < len {
                        continue;
                    }
                    let suffix = &ctx[ctx.len() - len..];
                    let slot = counts.entry(suffix.to_vec()).or_default();
                    for (&t, &c) in next {
                        *slot.entry(t).or_default() += c;
                        *totals.entry(suffix.to_vec()).or_default() += c;
                    }
                }
                self.suffixes.push((counts, totals));
            }
        }
        self.version = self.compute_version();
    }

    fn context<'a>(&self, prefix: &'a [u32]) -> &'a [u32] {
        &prefix[prefix.len().saturating_sub(self.order - 1)..]
    }

    pub fn count(&self, context: &[u32], next: u32) -> u64 {
        self.counts
            .get(context)
            .and_then(|m| m.get(&next))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[u32]) -> u64 {
        self.totals.get(context).copied().unwrap_or(0)
    }

    /// Maximum-likelihood distribution (no smoothing) for the prefix's
    /// context, or `None` if the context was never observed.
    pub fn unsmoothed(&self, prefix: &[u32]) -> Option<HashMap<u32, f64>> {
        let ctx = self.context(prefix);
        let total = self.context_total(ctx);
        let counts = self.counts.get(ctx)?;
        Some(
            counts
                .iter()
                .map(|(&t, &c)| (t, c as f64 / total as f64))
                .collect(),
        )
    }

    /// Counts and total of the distribution used after `prefix`.
    fn lookup(&self, prefix: &[u32]) -> (Option<&HashMap<u32, u64>>, u64) {
        let ctx = self.context(prefix);
        let total = self.context_total(ctx);
        if total > 0 || !self.backoff {
            return (self.counts.get(ctx), total);
        }
        for len in (0..ctx.len().min(self.order - 1)).rev() {
            let (counts, totals) = &self.suffixes[len];
            let suffix = &ctx[ctx.len() - len..];
            if let Some(&total) = totals.get(suffix) {
                return (counts.get(suffix), total);
            }
        }
        (None, 0)
    }

    pub fn probability(&self, prefix: &[u32], next: u32) -> f64 {
        let (counts, total) = self.lookup(prefix);
        let denom = total as f64 + self.smoothing * self.vocab_size as f64;
        let c = counts.and_then(|m| m.get(&next)).copied().unwrap_or(0);
        (c as f64 + self.smoothing) / denom
    }

    pub(crate) fn to_tables(&self) -> NGramTables {
        let mut entries: Vec<(Vec<u32>, u32, u64)> = self
            .counts
            .iter()
            .flat_map(|(ctx, m)| m.iter().map(move |(&t, &c)| (ctx.clone(), t, c)))
            .collect();
        entries.sort();
        NGramTables {
            order: self.order,
            smoothing: self.smoothing,
            vocab_size: self.vocab_size,
            backoff: self.backoff,
            entries,
        }
    }

    pub(crate) fn from_tables(tables: NGramTables) -> Self {
        let mut model = NGramModel::new(tables.order, tables.smoothing, tables.vocab_size);
        model.backoff = tables.backoff;
        for (ctx, next, count) in tables.entries {
            *model
                .counts
                .entry(ctx.clone())
                .or_default()
                .entry(next)
                .or_default() += count;
            *model.totals.entry(ctx).or_default() += count;
        }
        model.refresh();
        model
    }

    fn compute_version(&self) -> String {
        let tables = self.to_tables();
        let mut hasher = Sha256::new();
        for (ctx, next, count) in &tables.entries {
            for t in ctx {
                hasher.update(t.to_le_bytes());
            }
            hasher.update([0xff]);
            hasher.update(next.to_le_bytes());
            hasher.update(count.to_le_bytes());
        }
        let backoff = if self.backoff { "b" } else { "" };
        format!(
            "ngram{}{backoff}-{}",
            self.order,
            hex::encode(&hasher.finalize()[..4])
        )
    }
}

impl SequenceModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn context_length(&self) -> usize {
        self.order - 1
    }

    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64> {
        let (counts, total) = self.lookup(prefix);
        let denom = total as f64 + self.smoothing * self.vocab_size as f64;
        let mut logits = vec![(self.smoothing / denom).ln(); self.vocab_size];
        if let Some(counts) = counts {
            for (&t, &c) in counts {
                logits[t as usize] = ((c as f64 + self.smoothing) / denom).ln();
            }
        }
        logits
    }

    fn model_version(&self) -> String {
        self.version.clone()
    }

    fn lookahead_width(&self) -> usize {
        64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Corpus by hand, order 2 (bigram), V = 5:
    //   [0 1 2] [0 1 3] [0 2 2]
    // ctx [0]: 1 twice, 2 once  -> P(1|0) = 2/3, P(2|0) = 1/3
    // ctx [1]: 2 once, 3 once   -> 1/2 each
    // ctx [2]: 2 once           -> P(2|2) = 1
    #[test]
    fn counts_match_hand_tally() {
        let mut m = NGramModel::new(2, 0.01, 5);
        m.fit(&[vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 2]]);
        let d = m.unsmoothed(&[0]).unwrap();
        assert_eq!(d[&1], 2.0 / 3.0);
        assert_eq!(d[&2], 1.0 / 3.0);
        let d = m.unsmoothed(&[4, 1]).unwrap();
        assert_eq!((d[&2], d[&3]), (0.5, 0.5));
        assert_eq!(m.unsmoothed(&[2]).unwrap()[&2], 1.0);
        assert!(m.unsmoothed(&[3]).is_none());
        // smoothed: (2 + 0.01) / (3 + 0.05)
        assert!((m.probability(&[0], 1) - 2.01 / 3.05).abs() < 1e-15);
    }

    #[test]
    fn seen_once_is_argmax() {
        let mut m = NGramModel::new(3, 0.01, 50);
        m.fit(&[vec![7, 8, 42]]);
        let logits = m.next_token_logits(&[1, 7, 8]);
        let argmax = (0..50)
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap();
        assert_eq!(argmax, 42);
    }

    #[test]
    fn unseen_context_is_uniform_and_normalized() {
        let mut m = NGramModel::new(3, 0.01, 20);
        m.fit(&[vec![1, 2, 3, 4]]);
        let logits = m.next_token_logits(&[9, 9]);
        assert!(logits.iter().all(|&l| (l - logits[0]).abs() < 1e-15));
        for prefix in [&[1u32, 2][..], &[2, 3], &[9, 9], &[1]] {
            let total: f64 = m.next_token_logits(prefix).iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tables_roundtrip() {
        let mut m = NGramModel::new(3, 0.01, 20);
        m.fit(&[vec![1, 2, 3, 4, 2, 3, 5]]);
        let back = NGramModel::from_tables(m.to_tables());
        assert_eq!(back, m);
        assert_eq!(back.model_version(), m.model_version());
    }

    #[test]
    fn backoff_uses_longest_seen_suffix() {
        let corpus = [vec![1u32, 2, 3, 4], vec![5, 2, 3, 6], vec![7, 7, 3, 4]];
        let mut plain = NGramModel::new(3, 0.01, 10);
        plain.fit(&corpus);
        let backed = plain.clone().with_backoff(true);
        // seen context: identical
        assert_eq!(
            plain.next_token_logits(&[2, 3]),
            backed.next_token_logits(&[2, 3])
        );
        // [9, 3] unseen; suffix [3] seen three times: 4, 6, 4
        let want = (2.0 + 0.01) / (3.0 + 0.1);
        assert!((backed.probability(&[9, 3], 4) - want).abs() < 1e-15);
        let total: f64 = backed
            .next_token_logits(&[9, 3])
            .iter()
            .map(|l| l.exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        // [9, 9] falls back to the unigram over the 9 counted positions
        assert!((backed.probability(&[9, 9], 3) - (3.0 + 0.01) / (9.0 + 0.1)).abs() < 1e-15);
        assert_ne!(plain.model_version(), backed.model_version());
        assert_eq!(NGramModel::from_tables(backed.to_tables()), backed);
    }
}

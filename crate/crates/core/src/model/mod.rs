//! Autoregressive next-token models over the interleaved vocabulary.

mod checkpoint;
mod ngram;
mod sampling;
mod train;
mod transformer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointError, LoadedModel, CHECKPOINT_FORMAT_VERSION,
};
pub use ngram::{NGramModel, DEFAULT_ORDER, DEFAULT_SMOOTHING};
pub use sampling::{masked_distribution, sample_note_triple, sample_token, SamplingPolicy};
pub use train::{
    mean_nll, split_heldout, train_ngram, train_transformer, truncate_left, TrainConfig,
    TrainReport,
};
pub use transformer::{TinyTransformer, TinyTransformerConfig};

/// A model of `P(next token | prefix)`.
///
/// Implementations must be deterministic: the same prefix always yields the
/// same logits.
pub trait SequenceModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Longest prefix the model attends to; longer prefixes are truncated
    /// from the left.
    fn context_length(&self) -> usize;

    /// Unnormalized log-probabilities over the vocabulary.
    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64>;

    fn model_version(&self) -> String;

    /// How many candidate tokens a decoder may score with one token of
    /// lookahead at a step. Models whose evaluation is a table lookup can
    /// afford every candidate.
    fn lookahead_width(&self) -> usize {
        16
    }

    /// Summed negative log-likelihood of `tokens[1..]` and the number of
    /// predicted tokens.
    fn sequence_nll(&self, tokens: &[u32]) -> (f64, usize) {
        let mut total = 0.0;
        for i in 1..tokens.len() {
            let logits = self.next_token_logits(&tokens[..i]);
            total -= log_softmax_at(&logits, tokens[i] as usize);
        }
        (total, tokens.len().saturating_sub(1))
    }
}

impl<M: SequenceModel + ?Sized> SequenceModel for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn context_length(&self) -> usize {
        (**self).context_length()
    }
    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64> {
        (**self).next_token_logits(prefix)
    }
    fn model_version(&self) -> String {
        (**self).model_version()
    }
    fn lookahead_width(&self) -> usize {
        (**self).lookahead_width()
    }
    fn sequence_nll(&self, tokens: &[u32]) -> (f64, usize) {
        (**self).sequence_nll(tokens)
    }
}

impl<M: SequenceModel + ?Sized> SequenceModel for std::sync::Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn context_length(&self) -> usize {
        (**self).context_length()
    }
    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64> {
        (**self).next_token_logits(prefix)
    }
    fn model_version(&self) -> String {
        (**self).model_version()
    }
    fn lookahead_width(&self) -> usize {
        (**self).lookahead_width()
    }
    fn sequence_nll(&self, tokens: &[u32]) -> (f64, usize) {
        (**self).sequence_nll(tokens)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training dataset is empty")]
    DatasetEmpty,
    #[error("training diverged at step {step} (loss is not finite)")]
    DivergenceDetected {
        step: usize,
        last_good: Box<TinyTransformer>,
    },
    #[error("no token allowed at triple position {position}")]
    MaskEmpty { position: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    logits[index] - log_sum_exp(logits)
}

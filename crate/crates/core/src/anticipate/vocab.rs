//! Token vocabulary for interleaved note sequences.
//!
//! Each note is a `(time, duration, note)` triple:
//!
//! | range       | meaning                                                   |
//! |-------------|-----------------------------------------------------------|
//! | 0..1000     | time: 10 ms bins since the previous triple's key          |
//! | 1000..2000  | duration: 10 ms bins (bin 0 is not a valid duration)       |
//! | 2000..2384  | note: `instrument * 128 + pitch`                           |
//! | 2384..4768  | the same three ranges for control triples                 |
//! | 4768..4771  | BOS, EOS, PAD                                              |
//!
//! The time token of a triple is `onset - previous_key`, where the key of an
//! event is its onset and the key of a control is `onset - δ`. The first
//! triple is measured from zero. Because a control's key never precedes the
//! previous key, its onset is at least δ past it, so every time token is
//! non-negative.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ANTICIPATION_S;
use crate::leadsheet::{Instrument, NoteEvent};

pub const TIME_BASE: u32 = 0;
pub const DUR_BASE: u32 = 1000;
pub const NOTE_BASE: u32 = 2000;
pub const CONTROL_OFFSET: u32 = 2384;
pub const BOS: u32 = 4768;
pub const EOS: u32 = 4769;
pub const PAD: u32 = 4770;
pub const VOCAB_SIZE: usize = 4771;
/// Bins per time/duration range.
pub const MAX_BINS: i64 = 1000;

const US_PER_BIN: i64 = 10_000;
const BINS_PER_SECOND: f64 = 1e6 / US_PER_BIN as f64;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TokenError {
    #[error("note {index}: {what} of {seconds:.3} s exceeds the 9.99 s token range")]
    QuantizationOverflow {
        index: usize,
        what: &'static str,
        seconds: f64,
    },
    #[error("note {index}: sequence is not in interleaved order")]
    NotInterleaved { index: usize },
    #[error("malformed token sequence at position {position}: {reason}")]
    MalformedSequence { position: usize, reason: String },
}

/// The concrete vocabulary layout plus the anticipation interval.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pub anticipation_s: f64,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            anticipation_s: ANTICIPATION_S,
        }
    }
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    /// δ in 10 ms bins.
    pub fn anticipation_bins(&self) -> i64 {
        seconds_to_bins(self.anticipation_s)
    }

    /// Identifies the layout; models trained against a different layout
    /// refuse to load.
    pub fn hash(&self) -> String {
        let desc = format!(
            "time:{TIME_BASE}+{MAX_BINS};dur:{DUR_BASE}+{MAX_BINS};note:{NOTE_BASE}+384;ctrl:+{CONTROL_OFFSET};bos:{BOS};eos:{EOS};pad:{PAD};bin_us:{US_PER_BIN};delta_bins:{}",
            self.anticipation_bins()
        );
        hex::encode(&Sha256::digest(desc.as_bytes())[..16])
    }

    pub fn time_token(&self, bins: i64, control: bool) -> u32 {
        debug_assert!((0..MAX_BINS).contains(&bins));
        TIME_BASE + bins as u32 + if control { CONTROL_OFFSET } else { 0 }
    }

    pub fn duration_token(&self, bins: i64, control: bool) -> u32 {
        debug_assert!((1..MAX_BINS).contains(&bins));
        DUR_BASE + bins as u32 + if control { CONTROL_OFFSET } else { 0 }
    }

    pub fn note_token(&self, instrument: Instrument, pitch: u8, control: bool) -> u32 {
        NOTE_BASE
            + instrument.index() * 128
            + pitch as u32
            + if control { CONTROL_OFFSET } else { 0 }
    }
}

/// Decoded meaning of a single token id.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Time {
        bins: i64,
        control: bool,
    },
    Duration {
        bins: i64,
        control: bool,
    },
    Note {
        instrument: Instrument,
        pitch: u8,
        control: bool,
    },
    Bos,
    Eos,
    Pad,
}

impl Token {
    pub fn classify(id: u32) -> Option<Token> {
        match id {
            BOS => return Some(Token::Bos),
            EOS => return Some(Token::Eos),
            PAD => return Some(Token::Pad),
            _ => {}
        }
        if id >= BOS {
            return None;
        }
        let control = id >= CONTROL_OFFSET;
        let local = if control { id - CONTROL_OFFSET } else { id };
        Some(match local {
            0..=999 => Token::Time {
                bins: local as i64,
                control,
            },
            1000..=1999 => Token::Duration {
                bins: (local - DUR_BASE) as i64,
                control,
            },
            _ => {
                let n = local - NOTE_BASE;
                Token::Note {
                    instrument: Instrument::from_index(n / 128)?,
                    pitch: (n % 128) as u8,
                    control,
                }
            }
        })
    }
}

/// Interleaved token sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<u32>,
    pub anticipation_horizon_s: f64,
}

impl TokenSeq {
    /// Number of note triples (BOS/EOS/PAD excluded).
    pub fn triple_count(&self) -> usize {
        self.tokens.iter().filter(|&&t| t < BOS).count() / 3
    }
}

/// A note on the 10 ms grid together with its sequence key.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct QuantizedNote {
    pub onset_bins: i64,
    pub duration_bins: i64,
    pub instrument: Instrument,
    pub pitch: u8,
    pub control: bool,
    pub key_bins: i64,
}

impl QuantizedNote {
    pub fn to_event(self) -> NoteEvent {
        NoteEvent::new(
            self.onset_bins as f64 / 100.0,
            self.duration_bins as f64 / 100.0,
            self.instrument,
            self.pitch,
        )
    }
}

/// Nearest 10 ms bin, halves rounded up.
pub fn seconds_to_bins(seconds: f64) -> i64 {
    (seconds * BINS_PER_SECOND + 0.5).floor() as i64
}

/// Snap an interleaved note to the token grid.
pub fn quantize(note: &NoteEvent, control: bool, vocab: &Vocabulary) -> QuantizedNote {
    let onset_bins = seconds_to_bins(note.start_s);
    let duration_bins = seconds_to_bins(note.duration_s).max(1);
    let key_bins = if control {
        onset_bins - vocab.anticipation_bins()
    } else {
        onset_bins
    };
    QuantizedNote {
        onset_bins,
        duration_bins,
        instrument: note.instrument,
        pitch: note.pitch,
        control,
        key_bins,
    }
}

/// Running position of a token sequence: the key of the previous triple.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct DecodeState {
    pub prev_key_bins: i64,
    anticipation_bins: i64,
    started: bool,
}

impl DecodeState {
    pub fn new(vocab: &Vocabulary) -> Self {
        DecodeState {
            prev_key_bins: 0,
            anticipation_bins: vocab.anticipation_bins(),
            started: false,
        }
    }

    /// Time-token bins that place a note with this onset after the previous key.
    pub fn delta_for(&self, onset_bins: i64) -> i64 {
        onset_bins - self.prev_key_bins
    }

    pub fn onset_for(&self, delta_bins: i64) -> i64 {
        self.prev_key_bins + delta_bins
    }

    pub fn key_of(&self, onset_bins: i64, control: bool) -> i64 {
        if control {
            onset_bins - self.anticipation_bins
        } else {
            onset_bins
        }
    }

    pub fn advance(&mut self, onset_bins: i64, control: bool) {
        self.prev_key_bins = self.key_of(onset_bins, control);
        self.started = true;
    }

    /// Token triple for `note`, advancing the state.
    pub fn encode(
        &mut self,
        note: &QuantizedNote,
        vocab: &Vocabulary,
        index: usize,
    ) -> Result<[u32; 3], TokenError> {
        let delta = self.delta_for(note.onset_bins);
        if delta < 0 || (self.started && note.key_bins < self.prev_key_bins) {
            return Err(TokenError::NotInterleaved { index });
        }
        if delta >= MAX_BINS {
            return Err(TokenError::QuantizationOverflow {
                index,
                what: "time delta",
                seconds: delta as f64 / 100.0,
            });
        }
        if note.duration_bins >= MAX_BINS {
            return Err(TokenError::QuantizationOverflow {
                index,
                what: "duration",
                seconds: note.duration_bins as f64 / 100.0,
            });
        }
        self.advance(note.onset_bins, note.control);
        Ok([
            vocab.time_token(delta, note.control),
            vocab.duration_token(note.duration_bins, note.control),
            vocab.note_token(note.instrument, note.pitch, note.control),
        ])
    }
}

/// Encode an interleaved note list. `complete` appends EOS.
pub fn tokenize(
    seq: &[(NoteEvent, bool)],
    vocab: &Vocabulary,
    complete: bool,
) -> Result<TokenSeq, TokenError> {
    let mut tokens = Vec::with_capacity(seq.len() * 3 + 2);
    tokens.push(BOS);
    let mut state = DecodeState::new(vocab);
    for (index, (note, control)) in seq.iter().enumerate() {
        let q = quantize(note, *control, vocab);
        tokens.extend(state.encode(&q, vocab, index)?);
    }
    if complete {
        tokens.push(EOS);
    }
    Ok(TokenSeq {
        tokens,
        anticipation_horizon_s: vocab.anticipation_s,
    })
}

/// Decode tokens back into `(note, is_control)` pairs in sequence order.
pub fn detokenize(
    seq: &TokenSeq,
    vocab: &Vocabulary,
) -> Result<Vec<(NoteEvent, bool)>, TokenError> {
    detokenize_quantized(&seq.tokens, vocab).map(|notes| {
        notes
            .into_iter()
            .map(|q| (q.to_event(), q.control))
            .collect()
    })
}

pub(crate) fn detokenize_quantized(
    tokens: &[u32],
    vocab: &Vocabulary,
) -> Result<Vec<QuantizedNote>, TokenError> {
    let malformed =
        |position: usize, reason: String| TokenError::MalformedSequence { position, reason };
    let mut out = Vec::new();
    let mut state = DecodeState::new(vocab);
    let mut pos = 0;
    if tokens.first() == Some(&BOS) {
        pos = 1;
    }
    while pos < tokens.len() {
        let classify = |p: usize| {
            Token::classify(tokens[p])
                .ok_or_else(|| malformed(p, format!("token {} out of range", tokens[p])))
        };
        match classify(pos)? {
            Token::Eos | Token::Pad => {
                if let Some(p) = (pos + 1..tokens.len()).find(|&p| tokens[p] != PAD) {
                    return Err(malformed(p, "content after end of sequence".into()));
                }
                break;
            }
            Token::Bos => return Err(malformed(pos, "BOS inside sequence".into())),
            Token::Time {
                bins: delta,
                control,
            } => {
                if pos + 2 >= tokens.len() {
                    return Err(malformed(pos, "truncated triple".into()));
                }
                let duration_bins = match classify(pos + 1)? {
                    Token::Duration { bins, control: c } if c == control => {
                        if bins == 0 {
                            return Err(malformed(pos + 1, "zero duration".into()));
                        }
                        bins
                    }
                    other => {
                        return Err(malformed(
                            pos + 1,
                            format!("expected duration token, found {other:?}"),
                        ))
                    }
                };
                let (instrument, pitch) = match classify(pos + 2)? {
                    Token::Note {
                        instrument,
                        pitch,
                        control: c,
                    } if c == control => (instrument, pitch),
                    other => {
                        return Err(malformed(
                            pos + 2,
                            format!("expected note token, found {other:?}"),
                        ))
                    }
                };
                let onset_bins = state.onset_for(delta);
                let key_bins = state.key_of(onset_bins, control);
                state.advance(onset_bins, control);
                out.push(QuantizedNote {
                    onset_bins,
                    duration_bins,
                    instrument,
                    pitch,
                    control,
                    key_bins,
                });
                pos += 3;
            }
            other => {
                return Err(malformed(
                    pos,
                    format!("expected time token, found {other:?}"),
                ))
            }
        }
    }
    Ok(out)
}

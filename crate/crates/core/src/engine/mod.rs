//! Span-constrained generation: conditioning, masked decoding, and writing
//! accepted suggestions back into a lead sheet.

mod decode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anticipate::{
    interleave, partition, quantize, seconds_to_bins, Capability, DecodeState, QuantizedNote, Span,
    TokenError, TokenSeq, Vocabulary, BOS,
};
use crate::leadsheet::{
    beats_to_seconds, realize_all, Beats, Fixed, HarmonyChord, LeadSheet, MelodyNote, SheetError,
};
use crate::model::{SamplingPolicy, SequenceModel};

pub use decode::{generate, GRID_BEATS, MAX_GENERATED_TRIPLES};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("span [{start}, {end}) is not inside the song (0..{total} beats)")]
    SpanOutOfRange { start: u32, end: u32, total: u32 },
    #[error("no suggestion: {0}")]
    GenerationStalled(String),
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error(
        "sheet changed since the suggestion was requested (expected {expected}, found {found})"
    )]
    Conflict { expected: String, found: String },
    #[error("invalid sampling policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Sheet(#[from] SheetError),
    #[error(transparent)]
    Token(#[from] TokenError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub sheet: LeadSheet,
    /// `[start, end)` in whole beats.
    pub span_beats: (u32, u32),
    pub capability: Capability,
    pub policy: SamplingPolicy,
    pub alternative_index: u64,
}

impl GenerationRequest {
    pub fn new(sheet: LeadSheet, span_beats: (u32, u32), capability: Capability) -> Self {
        GenerationRequest {
            sheet,
            span_beats,
            capability,
            policy: SamplingPolicy::default(),
            alternative_index: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let (start, end) = self.span_beats;
        let total = self.sheet.total_beats();
        if start >= end || end > total {
            return Err(EngineError::SpanOutOfRange { start, end, total });
        }
        self.policy.validate().map_err(EngineError::InvalidPolicy)?;
        self.sheet.validate()?;
        Ok(())
    }

    pub fn start_beats(&self) -> Beats {
        Fixed::from_int(self.span_beats.0 as i64)
    }

    pub fn end_beats(&self) -> Beats {
        Fixed::from_int(self.span_beats.1 as i64)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SpanEnd,
    EndOfSequence,
    TripleCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub request: GenerationRequest,
    /// Fingerprint of the sheet the request was made against.
    pub sheet_fingerprint: String,
    pub generated_melody: Vec<MelodyNote>,
    pub generated_harmony: Vec<HarmonyChord>,
    /// Prompt, injected controls and generated events, in sequence order.
    pub token_trace: TokenSeq,
    pub model_version: String,
    pub stop_reason: StopReason,
}

impl Suggestion {
    pub fn is_empty(&self) -> bool {
        self.generated_melody.is_empty() && self.generated_harmony.is_empty()
    }

    pub fn note_count(&self) -> usize {
        self.generated_melody.len() + self.generated_harmony.len()
    }
}

/// Decoding inputs derived from a request.
#[derive(Clone, Debug)]
pub struct Conditioning {
    pub prompt: TokenSeq,
    /// Controls with key at or after the span start, in key order.
    pub pending_controls: Vec<QuantizedNote>,
    pub start_time_s: f64,
    pub stop_time_s: f64,
    pub(crate) state: DecodeState,
    pub(crate) start_bins: i64,
    pub(crate) stop_bins: i64,
    /// End of a note of the same stream sounding across the span start.
    pub(crate) melody_floor: Beats,
    pub(crate) harmony_floor: Beats,
}

impl Conditioning {
    pub(crate) fn floor_bins(&self, floor: Beats, tempo: crate::leadsheet::Tempo) -> i64 {
        // round up so the onset stays at or after the sustained note's end
        let us = (beats_to_seconds(floor, tempo) * 1e6).round() as i64;
        (us + 9_999).div_euclid(10_000).max(self.start_bins)
    }
}

pub fn build_conditioning(
    req: &GenerationRequest,
    vocab: &Vocabulary,
) -> Result<Conditioning, EngineError> {
    req.validate()?;
    let sheet = &req.sheet;
    let start_time_s = beats_to_seconds(req.start_beats(), sheet.tempo);
    let stop_time_s = beats_to_seconds(req.end_beats(), sheet.tempo);
    let span = Span {
        t_s: start_time_s,
        t_e: stop_time_s,
    };
    let realized = realize_all(sheet)?;
    let parts = partition(
        &realized.melody,
        &realized.harmony,
        &realized.click,
        span,
        req.capability,
    );
    let start_bins = seconds_to_bins(start_time_s);

    let mut tokens = vec![BOS];
    let mut state = DecodeState::new(vocab);
    let mut pending = Vec::new();
    let mut index = 0;
    for (note, control) in interleave(&parts, vocab.anticipation_s) {
        let q = quantize(&note, control, vocab);
        if q.key_bins >= start_bins {
            // events from the span onward are what gets generated
            if control {
                pending.push(q);
            }
            continue;
        }
        tokens.extend(state.encode(&q, vocab, index)?);
        index += 1;
    }

    let start = req.start_beats();
    let sustained = |ends: &mut dyn Iterator<Item = (Beats, Beats)>| {
        ends.filter(|&(onset, end)| onset < start && end > start)
            .map(|(_, end)| end)
            .max()
            .unwrap_or(start)
    };
    let melody_floor = sustained(&mut sheet.melody.iter().map(|n| (n.onset_beats, n.end_beats())));
    let harmony_floor =
        sustained(&mut sheet.harmony.iter().map(|c| (c.onset_beats, c.end_beats())));

    Ok(Conditioning {
        prompt: TokenSeq {
            tokens,
            anticipation_horizon_s: vocab.anticipation_s,
        },
        pending_controls: pending,
        start_time_s,
        stop_time_s,
        state,
        start_bins,
        stop_bins: seconds_to_bins(stop_time_s),
        melody_floor,
        harmony_floor,
    })
}

/// Generator for one alternative: stream `alternative_index` of the
/// session seed.
pub fn session_rng(seed: u64, alternative_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(alternative_index);
    rng
}

/// The next alternative in the session's stream.
pub fn next_alternative<M: SequenceModel + ?Sized>(
    req: &GenerationRequest,
    model: &M,
    seed: u64,
    vocab: &Vocabulary,
) -> Result<Suggestion, EngineError> {
    let mut next = req.clone();
    next.alternative_index += 1;
    generate(
        &next,
        model,
        &mut session_rng(seed, next.alternative_index),
        vocab,
    )
}

/// Replace the generated streams' notes inside the span with the
/// suggestion's notes. Everything else is kept as is.
pub fn accept(sheet: &LeadSheet, suggestion: &Suggestion) -> Result<LeadSheet, EngineError> {
    let found = sheet.fingerprint();
    if found != suggestion.sheet_fingerprint {
        return Err(EngineError::Conflict {
            expected: suggestion.sheet_fingerprint.clone(),
            found,
        });
    }
    let req = &suggestion.request;
    let (start, end) = (req.start_beats(), req.end_beats());
    let inside = |onset: Beats| onset >= start && onset < end;
    let mut out = sheet.clone();
    if req.capability.generates_melody() {
        out.melody.retain(|n| !inside(n.onset_beats));
        out.melody.extend_from_slice(&suggestion.generated_melody);
    }
    if req.capability.generates_harmony() {
        out.harmony.retain(|c| !inside(c.onset_beats));
        out.harmony.extend_from_slice(&suggestion.generated_harmony);
    }
    out.sort();
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anticipate::{detokenize, CONTROL_OFFSET};
    use crate::leadsheet::{ChordQuality, KeySignature, Meter, Tempo};

    fn sheet() -> LeadSheet {
        let b = Fixed::from_int;
        let mut s = LeadSheet::empty(
            KeySignature::C_MAJOR,
            Meter::FOUR_FOUR,
            Tempo::from_bpm(120),
            4,
        );
        s.melody = vec![
            MelodyNote {
                onset_beats: b(0),
                duration_beats: b(2),
                scale_degree: 1,
                octave: 4,
                alteration: 0,
            },
            MelodyNote {
                onset_beats: b(5),
                duration_beats: b(1),
                scale_degree: 3,
                octave: 4,
                alteration: 0,
            },
            MelodyNote {
                onset_beats: b(12),
                duration_beats: b(1),
                scale_degree: 5,
                octave: 4,
                alteration: 0,
            },
        ];
        s.harmony = vec![
            HarmonyChord {
                onset_beats: b(0),
                duration_beats: b(4),
                root_degree: 1,
                quality: ChordQuality::TriadDiatonic,
                inversion: 0,
            },
            HarmonyChord {
                onset_beats: b(8),
                duration_beats: b(4),
                root_degree: 5,
                quality: ChordQuality::TriadDiatonic,
                inversion: 0,
            },
        ];
        s
    }

    #[test]
    fn span_bounds_checked() {
        let v = Vocabulary::default();
        for span in [(4, 4), (5, 3), (0, 17)] {
            let r = build_conditioning(
                &GenerationRequest::new(sheet(), span, Capability::LeftToRight),
                &v,
            );
            assert!(
                matches!(r, Err(EngineError::SpanOutOfRange { .. })),
                "{span:?}"
            );
        }
    }

    #[test]
    fn empty_sheet_prompt_is_clicks_only() {
        let v = Vocabulary::default();
        let s = LeadSheet::empty(
            KeySignature::C_MAJOR,
            Meter::FOUR_FOUR,
            Tempo::from_bpm(120),
            8,
        );
        let c = build_conditioning(
            &GenerationRequest::new(s, (4, 8), Capability::LeftToRight),
            &v,
        )
        .unwrap();
        let notes = detokenize(&c.prompt, &v).unwrap();
        // span starts at 2 s, so clicks with onset < 7 s are already in the prompt
        assert_eq!(notes.len(), 14);
        assert!(notes
            .iter()
            .all(|(n, ctrl)| *ctrl && n.instrument == crate::leadsheet::Instrument::Click));
        assert_eq!(c.prompt.tokens[0], BOS);
        assert!(c.pending_controls.iter().all(|q| q.key_bins >= 200));
        assert_eq!(c.pending_controls.len(), 32 - 14);
    }

    #[test]
    fn fill_in_middle_controls_include_later_notes() {
        // beats [4, 8) at 120 bpm = [2 s, 4 s); the note at beat 5 is dropped,
        // the chord at 8 and melody at 12 are controls keyed 5 s early
        let v = Vocabulary::default();
        let c = build_conditioning(
            &GenerationRequest::new(sheet(), (4, 8), Capability::FillInMiddle),
            &v,
        )
        .unwrap();
        let prompt = detokenize(&c.prompt, &v).unwrap();
        let events: Vec<_> = prompt
            .iter()
            .filter(|(_, ctrl)| !ctrl)
            .map(|(n, _)| (n.start_s, n.pitch))
            .collect();
        assert_eq!(events, vec![(0.0, 60), (0.0, 48), (0.0, 52), (0.0, 55)]);
        let mut ctrl_pitches: Vec<(f64, u8)> = prompt
            .iter()
            .filter(|(n, ctrl)| *ctrl && n.instrument != crate::leadsheet::Instrument::Click)
            .map(|(n, _)| (n.start_s, n.pitch))
            .collect();
        ctrl_pitches.extend(
            c.pending_controls
                .iter()
                .filter(|q| q.instrument != crate::leadsheet::Instrument::Click)
                .map(|q| (q.onset_bins as f64 / 100.0, q.pitch)),
        );
        assert_eq!(
            ctrl_pitches,
            vec![(4.0, 55), (4.0, 59), (4.0, 62), (6.0, 67)]
        );
        assert!(c.prompt.tokens[1..].iter().any(|&t| t >= CONTROL_OFFSET));
    }
}

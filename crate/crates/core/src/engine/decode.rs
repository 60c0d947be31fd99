//! Masked autoregressive decoding of one suggestion.
//!
//! Masks enforce, per triple:
//! - the time/duration/note grammar (event tokens only; EOS at a time slot);
//! - onsets at or after the decode time and the span start and no later than
//!   the span end; sampling the span end itself stops decoding;
//! - the instrument classes the capability generates;
//! - monophonic melody, with at most one note per onset, sounding after any
//!   melody note held across the span start (likewise for harmony);
//! - harmony tones that spell, in ascending order and with one shared onset
//!   and duration, a voicing the functional chord model can name.
//!
//! A free duration is drawn from its distribution conditioned on the next
//! note being allowed, over the model's lookahead width of most likely
//! duration candidates.
//!
//! A sampled onset at or past the key of the next pending control injects
//! that control first, then the time slot is sampled again; such onsets are
//! allowed past the span end, except while a chord is unfinished.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::{build_conditioning, EngineError, GenerationRequest, StopReason, Suggestion};
use crate::anticipate::{
    QuantizedNote, TokenSeq, Vocabulary, DUR_BASE, EOS, MAX_BINS, NOTE_BASE, VOCAB_SIZE,
};
use crate::leadsheet::{
    chord_from_pitches, chord_voicings, melody_from_pitch, seconds_to_beats, Beats, Fixed,
    HarmonyChord, Instrument, KeySignature, MelodyNote,
};
use crate::model::{log_sum_exp, sample_token, ModelError, SequenceModel};

pub const MAX_GENERATED_TRIPLES: usize = 256;

/// Generated onsets and durations snap to quarter-beat steps.
pub const GRID_BEATS: Fixed = Fixed::from_micros(250_000);

struct OpenChord {
    onset: i64,
    duration: i64,
    pitches: Vec<u8>,
}

struct Masks {
    generates_melody: bool,
    generates_harmony: bool,
    melody_pitch_ok: [bool; 128],
    voicings: Vec<Vec<u8>>,
    melody_floor_bins: i64,
    harmony_floor_bins: i64,
    stop_bins: i64,
}

struct DecodeCursor {
    /// No event may start before this.
    time: i64,
    last: Option<(i64, Instrument)>,
    chord: Option<OpenChord>,
}

impl Masks {
    fn new(key: KeySignature, generates_melody: bool, generates_harmony: bool) -> Self {
        let mut melody_pitch_ok = [false; 128];
        for (p, ok) in melody_pitch_ok.iter_mut().enumerate() {
            *ok = melody_from_pitch(key, p as u8).is_some();
        }
        let voicings = chord_voicings(key).into_iter().map(|v| v.pitches).collect();
        Masks {
            generates_melody,
            generates_harmony,
            melody_pitch_ok,
            voicings,
            melody_floor_bins: 0,
            harmony_floor_bins: 0,
            stop_bins: 0,
        }
    }

    fn is_voicing(&self, pitches: &[u8]) -> bool {
        self.voicings.iter().any(|v| v == pitches)
    }

    fn next_tones(&self, prefix: &[u8]) -> BTreeSet<u8> {
        self.voicings
            .iter()
            .filter(|v| v.len() > prefix.len() && v[..prefix.len()] == *prefix)
            .map(|v| v[prefix.len()])
            .collect()
    }

    fn chord_incomplete(&self, cur: &DecodeCursor) -> bool {
        cur.chord
            .as_ref()
            .is_some_and(|c| !self.is_voicing(&c.pitches))
    }

    fn melody_ok(&self, cur: &DecodeCursor, onset: i64) -> bool {
        self.generates_melody
            && onset >= self.melody_floor_bins
            && onset >= cur.time
            && cur.last.is_none_or(|(t, _)| onset > t)
            && !self.chord_incomplete(cur)
    }

    fn harmony_tones(&self, cur: &DecodeCursor, onset: i64) -> BTreeSet<u8> {
        if !self.generates_harmony || onset < self.harmony_floor_bins || onset < cur.time {
            return BTreeSet::new();
        }
        match &cur.chord {
            Some(c) if c.onset == onset => self.next_tones(&c.pitches),
            Some(_) if self.chord_incomplete(cur) => BTreeSet::new(),
            _ => self.next_tones(&[]),
        }
    }

    fn onset_ok(&self, cur: &DecodeCursor, onset: i64) -> bool {
        if onset < cur.time {
            return false;
        }
        if onset >= self.stop_bins {
            // the span end itself is the stop outcome; later onsets are masked
            return onset == self.stop_bins && !self.chord_incomplete(cur);
        }
        self.melody_ok(cur, onset) || !self.harmony_tones(cur, onset).is_empty()
    }

    /// Duration bins forced by an open chord being extended at `onset`.
    fn forced_duration(&self, cur: &DecodeCursor, onset: i64) -> Option<i64> {
        cur.chord
            .as_ref()
            .filter(|c| c.onset == onset)
            .map(|c| c.duration)
    }

    fn note_ok(&self, cur: &DecodeCursor, onset: i64, token: u32) -> bool {
        if !(NOTE_BASE..NOTE_BASE + 384).contains(&token) {
            return false;
        }
        let local = token - NOTE_BASE;
        let pitch = (local % 128) as u8;
        match Instrument::from_index(local / 128) {
            Some(Instrument::Melody) => {
                self.melody_pitch_ok[pitch as usize] && self.melody_ok(cur, onset)
            }
            Some(Instrument::Harmony) => self.harmony_tones(cur, onset).contains(&pitch),
            _ => false,
        }
    }
}

fn stalled(e: ModelError) -> EngineError {
    EngineError::GenerationStalled(e.to_string())
}

/// Sample one suggestion for `req`.
pub fn generate<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    req: &GenerationRequest,
    model: &M,
    rng: &mut R,
    vocab: &Vocabulary,
) -> Result<Suggestion, EngineError> {
    if model.vocab_size() != VOCAB_SIZE {
        return Err(EngineError::ModelUnavailable(format!(
            "model vocabulary has {} tokens, expected {VOCAB_SIZE}",
            model.vocab_size()
        )));
    }
    let cond = build_conditioning(req, vocab)?;
    let sheet = &req.sheet;
    let mut masks = Masks::new(
        sheet.key,
        req.capability.generates_melody(),
        req.capability.generates_harmony(),
    );
    masks.melody_floor_bins = cond.floor_bins(cond.melody_floor, sheet.tempo);
    masks.harmony_floor_bins = cond.floor_bins(cond.harmony_floor, sheet.tempo);
    masks.stop_bins = cond.stop_bins;

    let mut tokens = cond.prompt.tokens.clone();
    let mut state = cond.state;
    let mut pending: VecDeque<QuantizedNote> = cond.pending_controls.iter().copied().collect();
    let mut cur = DecodeCursor {
        time: cond.start_bins,
        last: None,
        chord: None,
    };
    let mut generated: Vec<QuantizedNote> = Vec::new();
    let mut control_index = 0;

    let mut inject =
        |tokens: &mut Vec<u32>, state: &mut crate::anticipate::DecodeState, q: &QuantizedNote| {
            control_index += 1;
            state
                .encode(q, vocab, control_index)
                .map(|t| tokens.extend(t))
        };

    let stop_reason = loop {
        if generated.len() >= MAX_GENERATED_TRIPLES {
            break StopReason::TripleCap;
        }
        while pending.front().is_some_and(|c| c.key_bins <= cur.time) {
            let c = pending.pop_front().expect("checked");
            inject(&mut tokens, &mut state, &c)?;
        }

        let logits = model.next_token_logits(&tokens);
        let prev_key = state.prev_key_bins;
        let next_key = pending.front().map(|c| c.key_bins);
        let time_token = sample_token(
            &logits,
            |t| {
                if t == EOS {
                    return !masks.chord_incomplete(&cur);
                }
                let onset = prev_key + t as i64;
                let injects = next_key.is_some_and(|k| onset >= k) && !masks.chord_incomplete(&cur);
                (t as i64) < MAX_BINS && (injects || masks.onset_ok(&cur, onset))
            },
            &req.policy,
            rng,
            0,
        )
        .map_err(stalled)?;
        if time_token == EOS {
            tokens.push(EOS);
            break StopReason::EndOfSequence;
        }
        let onset = prev_key + time_token as i64;
        if let Some(first) = pending.pop_front_if(|c| c.key_bins <= onset) {
            let mut next = Some(first);
            while let Some(c) = next {
                cur.time = cur.time.max(c.key_bins);
                inject(&mut tokens, &mut state, &c)?;
                next = pending.pop_front_if(|c| c.key_bins <= onset);
            }
            continue;
        }
        if onset >= masks.stop_bins {
            break StopReason::SpanEnd;
        }
        tokens.push(time_token);

        let forced = masks.forced_duration(&cur, onset);
        let mut logits = model.next_token_logits(&tokens);
        if forced.is_none() {
            logits = lookahead_duration_logits(model, &mut tokens, &logits, |t| {
                masks.note_ok(&cur, onset, t)
            });
        }
        let dur_token = sample_token(
            &logits,
            |t| {
                let bins = t as i64 - DUR_BASE as i64;
                (1..MAX_BINS).contains(&bins) && forced.is_none_or(|f| f == bins)
            },
            &req.policy,
            rng,
            1,
        )
        .map_err(stalled)?;
        tokens.push(dur_token);
        let duration = (dur_token - DUR_BASE) as i64;

        let logits = model.next_token_logits(&tokens);
        let note_token = sample_token(
            &logits,
            |t| masks.note_ok(&cur, onset, t),
            &req.policy,
            rng,
            2,
        )
        .map_err(stalled)?;
        tokens.push(note_token);
        let local = note_token - NOTE_BASE;
        let instrument = Instrument::from_index(local / 128).expect("masked to melody or harmony");
        let pitch = (local % 128) as u8;

        if instrument == Instrument::Harmony {
            match &mut cur.chord {
                Some(c) if c.onset == onset => c.pitches.push(pitch),
                _ => {
                    cur.chord = Some(OpenChord {
                        onset,
                        duration,
                        pitches: vec![pitch],
                    })
                }
            }
        }
        cur.last = Some((onset, instrument));
        cur.time = onset;
        state.advance(onset, false);
        generated.push(QuantizedNote {
            onset_bins: onset,
            duration_bins: duration,
            instrument,
            pitch,
            control: false,
            key_bins: onset,
        });
    };

    let floors = (cond.melody_floor, cond.harmony_floor);
    let (generated_melody, generated_harmony) = to_functional(req, floors, &generated);
    let suggestion_tokens = TokenSeq {
        tokens,
        anticipation_horizon_s: vocab.anticipation_s,
    };
    if generated_melody.is_empty()
        && generated_harmony.is_empty()
        && stop_reason == StopReason::TripleCap
    {
        return Err(EngineError::GenerationStalled(
            "triple cap reached without a usable note".into(),
        ));
    }
    let sheet_fingerprint = sheet.fingerprint();
    let id = suggestion_id(req, &sheet_fingerprint, &suggestion_tokens);
    Ok(Suggestion {
        id,
        request: req.clone(),
        sheet_fingerprint,
        generated_melody,
        generated_harmony,
        token_trace: suggestion_tokens,
        model_version: model.model_version(),
        stop_reason,
    })
}

/// Duration logits plus the log mass of allowed notes after each duration,
/// for the model's lookahead width of most likely durations; all others are
/// -inf.
fn lookahead_duration_logits<M: SequenceModel + ?Sized>(
    model: &M,
    tokens: &mut Vec<u32>,
    logits: &[f64],
    note_ok: impl Fn(u32) -> bool,
) -> Vec<f64> {
    let mut candidates: Vec<u32> = (DUR_BASE + 1..DUR_BASE + MAX_BINS as u32).collect();
    candidates.sort_by(|a, b| {
        logits[*b as usize]
            .total_cmp(&logits[*a as usize])
            .then(a.cmp(b))
    });
    candidates.truncate(model.lookahead_width());
    let mut out = vec![f64::NEG_INFINITY; logits.len()];
    for d in candidates {
        tokens.push(d);
        let next = model.next_token_logits(tokens);
        tokens.pop();
        let allowed: Vec<f64> = (NOTE_BASE..NOTE_BASE + 384)
            .filter(|&t| note_ok(t))
            .map(|t| next[t as usize])
            .collect();
        let all = log_sum_exp(&next);
        out[d as usize] = logits[d as usize] + log_sum_exp(&allowed) - all;
    }
    out
}

fn suggestion_id(req: &GenerationRequest, fingerprint: &str, tokens: &TokenSeq) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(req.span_beats.0.to_le_bytes());
    h.update(req.span_beats.1.to_le_bytes());
    h.update(req.capability.name().as_bytes());
    h.update(req.alternative_index.to_le_bytes());
    for t in &tokens.tokens {
        h.update(t.to_le_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

/// Placement of one generated note or chord in beats.
struct Placed<T> {
    onset: Beats,
    duration: Beats,
    item: T,
}

/// Snap onsets and durations to the grid, keep onsets inside the span and
/// after `floor`, keep one item per onset, and shorten each item so it ends
/// by the next onset and the span end.
fn place<T>(mut items: Vec<Placed<T>>, floor: Beats, end: Beats) -> Vec<Placed<T>> {
    for it in &mut items {
        it.onset = it.onset.snap(GRID_BEATS).max(floor);
        it.duration = it.duration.snap(GRID_BEATS).max(GRID_BEATS);
    }
    items.retain(|it| it.onset < end);
    items.sort_by_key(|it| it.onset);
    items.dedup_by_key(|it| it.onset);
    let onsets: Vec<Beats> = items
        .iter()
        .map(|it| it.onset)
        .skip(1)
        .chain(std::iter::once(end))
        .collect();
    for (it, next) in items.iter_mut().zip(onsets) {
        let room = next - it.onset;
        it.duration = it.duration.min(room);
    }
    items
}

fn to_functional(
    req: &GenerationRequest,
    (melody_floor, harmony_floor): (Beats, Beats),
    generated: &[QuantizedNote],
) -> (Vec<MelodyNote>, Vec<HarmonyChord>) {
    let sheet = &req.sheet;
    let key = sheet.key;
    let beats = |bins: i64| seconds_to_beats(bins as f64 / 100.0, sheet.tempo);
    let start = req.start_beats();
    let end = req.end_beats();

    let melody: Vec<Placed<(u8, i8, i8)>> = generated
        .iter()
        .filter(|q| q.instrument == Instrument::Melody)
        .map(|q| Placed {
            onset: beats(q.onset_bins),
            duration: beats(q.duration_bins),
            item: melody_from_pitch(key, q.pitch).expect("masked to representable pitches"),
        })
        .collect();
    let melody = place(melody, melody_floor.max(start), end)
        .into_iter()
        .map(|p| MelodyNote {
            onset_beats: p.onset,
            duration_beats: p.duration,
            scale_degree: p.item.0,
            octave: p.item.1,
            alteration: p.item.2,
        })
        .collect();

    let mut chords: Vec<Placed<(u8, crate::leadsheet::ChordQuality, u8)>> = Vec::new();
    let mut i = 0;
    while i < generated.len() {
        let q = generated[i];
        if q.instrument != Instrument::Harmony {
            i += 1;
            continue;
        }
        let group: Vec<u8> = generated[i..]
            .iter()
            .filter(|g| g.instrument == Instrument::Harmony && g.onset_bins == q.onset_bins)
            .map(|g| g.pitch)
            .collect();
        i += generated[i..]
            .iter()
            .take_while(|g| g.onset_bins == q.onset_bins)
            .count();
        // an unfinished chord at the triple cap has no functional reading
        if let Some(chord) = chord_from_pitches(key, &group) {
            chords.push(Placed {
                onset: beats(q.onset_bins),
                duration: beats(q.duration_bins),
                item: chord,
            });
        }
    }
    let harmony = place(chords, harmony_floor.max(start), end)
        .into_iter()
        .map(|p| HarmonyChord {
            onset_beats: p.onset,
            duration_beats: p.duration,
            root_degree: p.item.0,
            quality: p.item.1,
            inversion: p.item.2,
        })
        .collect();
    (melody, harmony)
}

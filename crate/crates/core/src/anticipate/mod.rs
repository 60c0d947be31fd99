//! Events/controls partitioning and anticipatory interleaving.
//!
//! A song's notes are split into *events* (what the model generates) and
//! *controls* (what it is conditioned on). Controls are placed in the
//! sequence `ANTICIPATION_S` seconds ahead of their onset, so the model has
//! already seen them when it reaches the point in time where they sound.

mod dataset;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::leadsheet::NoteEvent;

pub use dataset::{
    build_dataset, make_finetune_example, read_examples, sample_span, write_dataset, Dataset,
    DatasetManifest, ExampleRecord, FinetuneExample, SkippedSong,
};
pub use vocab::{
    detokenize, quantize, seconds_to_bins, tokenize, DecodeState, QuantizedNote, Token, TokenError,
    TokenSeq, Vocabulary, BOS, CONTROL_OFFSET, DUR_BASE, EOS, MAX_BINS, NOTE_BASE, PAD, TIME_BASE,
    VOCAB_SIZE,
};

/// Distance in seconds by which controls are moved ahead of their onset.
pub const ANTICIPATION_S: f64 = 5.0;

/// Seconds to integer microseconds.
pub fn time_us(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    LeftToRight,
    FillInMiddle,
    HarmToMel,
    MelToHarm,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::LeftToRight,
        Capability::FillInMiddle,
        Capability::HarmToMel,
        Capability::MelToHarm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Capability::LeftToRight => "left_to_right",
            Capability::FillInMiddle => "fill_in_middle",
            Capability::HarmToMel => "harm_to_mel",
            Capability::MelToHarm => "mel_to_harm",
        }
    }

    pub fn generates_melody(self) -> bool {
        self != Capability::MelToHarm
    }

    pub fn generates_harmony(self) -> bool {
        self != Capability::HarmToMel
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Capability {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown capability {s:?} (expected one of left_to_right, fill_in_middle, harm_to_mel, mel_to_harm)"))
    }
}

/// Selected time span `[t_s, t_e]` in seconds.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub t_s: f64,
    pub t_e: f64,
}

impl Span {
    pub fn new(t_s: f64, t_e: f64) -> Option<Self> {
        (t_s >= 0.0 && t_s < t_e).then_some(Span { t_s, t_e })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub events: Vec<NoteEvent>,
    pub controls: Vec<NoteEvent>,
    pub capability: Capability,
    pub span: Span,
}

/// Onset thresholds: a melody (resp. harmony) note is an event iff its onset
/// is strictly below the threshold.
fn thresholds(capability: Capability, span: Span) -> (f64, f64) {
    match capability {
        Capability::LeftToRight => (f64::INFINITY, f64::INFINITY),
        Capability::FillInMiddle => (span.t_e, span.t_e),
        Capability::HarmToMel => (span.t_e, span.t_s),
        Capability::MelToHarm => (span.t_s, span.t_e),
    }
}

fn note_order(a: &NoteEvent, b: &NoteEvent) -> std::cmp::Ordering {
    a.start_s
        .total_cmp(&b.start_s)
        .then(a.instrument.cmp(&b.instrument))
        .then(a.pitch.cmp(&b.pitch))
}

pub fn partition(
    melody: &[NoteEvent],
    harmony: &[NoteEvent],
    click: &[NoteEvent],
    span: Span,
    capability: Capability,
) -> Partition {
    let (melody_cut, harmony_cut) = thresholds(capability, span);
    let mut events = Vec::new();
    let mut controls = Vec::new();
    for (notes, cut) in [(melody, melody_cut), (harmony, harmony_cut)] {
        for n in notes {
            if n.start_s < cut {
                events.push(*n);
            } else {
                controls.push(*n);
            }
        }
    }
    controls.extend_from_slice(click);
    events.sort_by(note_order);
    controls.sort_by(note_order);
    Partition {
        events,
        controls,
        capability,
        span,
    }
}

/// Position key of a note in the interleaved sequence, in microseconds.
pub fn interleave_key_us(note: &NoteEvent, is_control: bool, anticipation_s: f64) -> i64 {
    let onset = time_us(note.start_s);
    if is_control {
        onset - time_us(anticipation_s)
    } else {
        onset
    }
}

/// Merge events and controls by key (`onset` for events, `onset - δ` for
/// controls). Equal keys put controls first, then order by instrument and
/// pitch. Keys equal to the microsecond are ordered by their 10 ms bin so the
/// token grid stays monotone.
pub fn interleave(partition: &Partition, anticipation_s: f64) -> Vec<(NoteEvent, bool)> {
    let delta_bins = seconds_to_bins(anticipation_s);
    let key = |n: &NoteEvent, control: bool| {
        let bins = seconds_to_bins(n.start_s) - if control { delta_bins } else { 0 };
        (interleave_key_us(n, control, anticipation_s), bins)
    };
    let mut keyed: Vec<((i64, i64), bool, NoteEvent)> = partition
        .events
        .iter()
        .map(|n| (key(n, false), false, *n))
        .chain(partition.controls.iter().map(|n| (key(n, true), true, *n)))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.instrument.cmp(&b.2.instrument))
            .then(a.2.pitch.cmp(&b.2.pitch))
    });
    keyed
        .into_iter()
        .map(|(_, control, note)| (note, control))
        .collect()
}

//! Lead sheets in functional notation and their realization into timed notes.
//!
//! Melody is written as scale degrees relative to the key, harmony as chord
//! roots on scale degrees with a quality and an inversion. Realization turns
//! both into absolute MIDI pitches at absolute times, and adds a click track
//! with one note per beat (accented on downbeats) so that a time-based model
//! can stay aligned to the beat grid.

mod fixed;
mod format;
mod realize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fixed::{Beats, Fixed, FixedParseError};
pub use format::{parse_leadsheet, serialize_leadsheet};
pub use realize::{
    beats_to_seconds, chord_from_pitches, chord_pitches, chord_voicings, click_track,
    melody_from_pitch, melody_pitch, realize_all, realize_harmony, realize_melody,
    seconds_to_beats, ChordVoicing, RealizedSheet, CLICK_DOWNBEAT_PITCH, CLICK_PITCH, MAJOR_SCALE,
    MINOR_SCALE,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SheetError {
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("invalid lead sheet: {0}")]
    Validation(String),
    #[error("realized pitch {pitch} is outside [{min}, {max}]")]
    Realization { pitch: i32, min: i32, max: i32 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    pub fn scale(self) -> &'static [i32; 7] {
        match self {
            Mode::Major => &MAJOR_SCALE,
            Mode::Minor => &MINOR_SCALE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "major" => Ok(Mode::Major),
            "minor" => Ok(Mode::Minor),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySignature {
    /// 0 = C, 11 = B.
    pub tonic_pitch_class: u8,
    pub mode: Mode,
}

impl KeySignature {
    pub const C_MAJOR: KeySignature = KeySignature {
        tonic_pitch_class: 0,
        mode: Mode::Major,
    };

    pub fn new(tonic_pitch_class: u8, mode: Mode) -> Self {
        KeySignature {
            tonic_pitch_class,
            mode,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatUnit {
    Half,
    Quarter,
    Eighth,
}

impl BeatUnit {
    pub fn denominator(self) -> u8 {
        match self {
            BeatUnit::Half => 2,
            BeatUnit::Quarter => 4,
            BeatUnit::Eighth => 8,
        }
    }

    pub fn from_denominator(d: u8) -> Option<Self> {
        match d {
            2 => Some(BeatUnit::Half),
            4 => Some(BeatUnit::Quarter),
            8 => Some(BeatUnit::Eighth),
            _ => None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Meter {
    pub beats_per_measure: u8,
    pub beat_unit: BeatUnit,
}

impl Meter {
    pub const FOUR_FOUR: Meter = Meter {
        beats_per_measure: 4,
        beat_unit: BeatUnit::Quarter,
    };
}

impl fmt::Display for Meter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            self.beats_per_measure,
            self.beat_unit.denominator()
        )
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tempo {
    pub bpm: Fixed,
}

impl Tempo {
    pub const MIN_BPM: i64 = 20;
    pub const MAX_BPM: i64 = 300;

    pub fn from_bpm(bpm: i64) -> Self {
        Tempo {
            bpm: Fixed::from_int(bpm),
        }
    }

    pub fn seconds_per_beat(self) -> f64 {
        60.0 / self.bpm.as_f64()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MelodyNote {
    pub onset_beats: Beats,
    pub duration_beats: Beats,
    /// 1..=7
    pub scale_degree: u8,
    /// 2..=6
    pub octave: i8,
    /// -1, 0 or +1
    pub alteration: i8,
}

impl MelodyNote {
    pub fn end_beats(&self) -> Beats {
        self.onset_beats + self.duration_beats
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordQuality {
    TriadDiatonic,
    SeventhDiatonic,
    Major,
    Minor,
    Diminished,
    Augmented,
    Dominant7,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 7] = [
        ChordQuality::TriadDiatonic,
        ChordQuality::SeventhDiatonic,
        ChordQuality::Major,
        ChordQuality::Minor,
        ChordQuality::Diminished,
        ChordQuality::Augmented,
        ChordQuality::Dominant7,
    ];

    pub fn tone_count(self) -> usize {
        match self {
            ChordQuality::SeventhDiatonic | ChordQuality::Dominant7 => 4,
            _ => 3,
        }
    }

    /// Fixed semitone template, or `None` for qualities stacked from the scale.
    pub fn template(self) -> Option<&'static [i32]> {
        match self {
            ChordQuality::TriadDiatonic | ChordQuality::SeventhDiatonic => None,
            ChordQuality::Major => Some(&[0, 4, 7]),
            ChordQuality::Minor => Some(&[0, 3, 7]),
            ChordQuality::Diminished => Some(&[0, 3, 6]),
            ChordQuality::Augmented => Some(&[0, 4, 8]),
            ChordQuality::Dominant7 => Some(&[0, 4, 7, 10]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::TriadDiatonic => "triad_diatonic",
            ChordQuality::SeventhDiatonic => "seventh_diatonic",
            ChordQuality::Major => "major",
            ChordQuality::Minor => "minor",
            ChordQuality::Diminished => "diminished",
            ChordQuality::Augmented => "augmented",
            ChordQuality::Dominant7 => "dominant7",
        }
    }
}

impl FromStr for ChordQuality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChordQuality::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| format!("unknown chord quality {s:?}"))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HarmonyChord {
    pub onset_beats: Beats,
    pub duration_beats: Beats,
    /// 1..=7
    pub root_degree: u8,
    pub quality: ChordQuality,
    pub inversion: u8,
}

impl HarmonyChord {
    pub fn end_beats(&self) -> Beats {
        self.onset_beats + self.duration_beats
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeadSheet {
    pub key: KeySignature,
    pub meter: Meter,
    pub tempo: Tempo,
    pub length_measures: u32,
    pub melody: Vec<MelodyNote>,
    pub harmony: Vec<HarmonyChord>,
}

impl LeadSheet {
    /// An empty sheet; still has to pass [`LeadSheet::validate`].
    pub fn empty(key: KeySignature, meter: Meter, tempo: Tempo, length_measures: u32) -> Self {
        LeadSheet {
            key,
            meter,
            tempo,
            length_measures,
            melody: Vec::new(),
            harmony: Vec::new(),
        }
    }

    pub fn total_beats(&self) -> u32 {
        self.length_measures * self.meter.beats_per_measure as u32
    }

    pub fn total_beats_fixed(&self) -> Beats {
        Fixed::from_int(self.total_beats() as i64)
    }

    pub fn duration_seconds(&self) -> f64 {
        beats_to_seconds(self.total_beats_fixed(), self.tempo)
    }

    /// Sort both streams by onset. Validation still rejects overlaps.
    pub fn sort(&mut self) {
        self.melody.sort_by_key(|n| n.onset_beats);
        self.harmony.sort_by_key(|c| c.onset_beats);
    }

    /// Short content hash of the canonical document, used to detect that a
    /// sheet changed between a generation request and its acceptance.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serialize_leadsheet(self).as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<(), SheetError> {
        let invalid = |msg: String| Err(SheetError::Validation(msg));
        if self.key.tonic_pitch_class > 11 {
            return invalid(format!(
                "tonic pitch class {} not in 0..=11",
                self.key.tonic_pitch_class
            ));
        }
        if !(1..=12).contains(&self.meter.beats_per_measure) {
            return invalid(format!(
                "beats per measure {} not in 1..=12",
                self.meter.beats_per_measure
            ));
        }
        let bpm = self.tempo.bpm;
        if bpm < Fixed::from_int(Tempo::MIN_BPM) || bpm > Fixed::from_int(Tempo::MAX_BPM) {
            return invalid(format!("tempo {bpm} bpm not in [20, 300]"));
        }
        if self.length_measures == 0 {
            return invalid("song must have at least one measure".into());
        }
        let total = self.total_beats_fixed();

        let mut prev_end: Option<Beats> = None;
        for (i, n) in self.melody.iter().enumerate() {
            if n.onset_beats.is_negative() {
                return invalid(format!("melody note {i}: negative onset"));
            }
            if !n.duration_beats.is_positive() {
                return invalid(format!("melody note {i}: duration must be positive"));
            }
            if !(1..=7).contains(&n.scale_degree) {
                return invalid(format!(
                    "melody note {i}: scale degree {} not in 1..=7",
                    n.scale_degree
                ));
            }
            if !(2..=6).contains(&n.octave) {
                return invalid(format!("melody note {i}: octave {} not in 2..=6", n.octave));
            }
            if !(-1..=1).contains(&n.alteration) {
                return invalid(format!(
                    "melody note {i}: alteration {} not in -1..=1",
                    n.alteration
                ));
            }
            let pitch = melody_pitch(self.key, n.scale_degree, n.octave, n.alteration);
            if !(24..=96).contains(&pitch) {
                return invalid(format!(
                    "melody note {i}: realized pitch {pitch} not in [24, 96]"
                ));
            }
            if n.end_beats() > total {
                return invalid(format!(
                    "melody note {i}: ends at beat {} past song end {total}",
                    n.end_beats()
                ));
            }
            if let Some(end) = prev_end {
                if n.onset_beats < end {
                    return invalid(format!(
                        "melody note {i}: overlaps previous note (onset {} < {end})",
                        n.onset_beats
                    ));
                }
            }
            prev_end = Some(n.end_beats());
        }

        let mut prev_end: Option<Beats> = None;
        for (i, c) in self.harmony.iter().enumerate() {
            if c.onset_beats.is_negative() {
                return invalid(format!("chord {i}: negative onset"));
            }
            if !c.duration_beats.is_positive() {
                return invalid(format!("chord {i}: duration must be positive"));
            }
            if !(1..=7).contains(&c.root_degree) {
                return invalid(format!(
                    "chord {i}: root degree {} not in 1..=7",
                    c.root_degree
                ));
            }
            if c.inversion as usize >= c.quality.tone_count() {
                return invalid(format!(
                    "chord {i}: inversion {} invalid for a {}-tone chord",
                    c.inversion,
                    c.quality.tone_count()
                ));
            }
            if c.end_beats() > total {
                return invalid(format!(
                    "chord {i}: ends at beat {} past song end {total}",
                    c.end_beats()
                ));
            }
            if let Some(end) = prev_end {
                if c.onset_beats < end {
                    return invalid(format!(
                        "chord {i}: overlaps previous chord (onset {} < {end})",
                        c.onset_beats
                    ));
                }
            }
            prev_end = Some(c.end_beats());
        }
        Ok(())
    }
}

/// Instrument class of a realized note.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Melody = 0,
    Harmony = 1,
    Click = 2,
}

impl Instrument {
    pub const ALL: [Instrument; 3] = [Instrument::Melody, Instrument::Harmony, Instrument::Click];

    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Melody => "melody",
            Instrument::Harmony => "harmony",
            Instrument::Click => "click",
        }
    }
}

/// A realized MIDI-like note.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub instrument: Instrument,
    pub pitch: u8,
}

impl NoteEvent {
    pub fn new(start_s: f64, duration_s: f64, instrument: Instrument, pitch: u8) -> Self {
        NoteEvent {
            start_s,
            duration_s,
            instrument,
            pitch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheet() -> LeadSheet {
        LeadSheet::empty(
            KeySignature::C_MAJOR,
            Meter::FOUR_FOUR,
            Tempo::from_bpm(120),
            2,
        )
    }

    fn note(onset: i64, dur: i64) -> MelodyNote {
        MelodyNote {
            onset_beats: Fixed::from_int(onset),
            duration_beats: Fixed::from_int(dur),
            scale_degree: 1,
            octave: 4,
            alteration: 0,
        }
    }

    #[test]
    fn overlapping_melody_rejected() {
        let mut s = sheet();
        s.melody = vec![note(0, 2), note(1, 1)];
        assert!(matches!(s.validate(), Err(SheetError::Validation(_))));
        s.melody = vec![note(0, 1), note(1, 1)];
        s.validate().unwrap();
    }

    #[test]
    fn notes_must_end_inside_song() {
        let mut s = sheet();
        s.melody = vec![note(7, 2)];
        assert!(s.validate().is_err());
        s.melody = vec![note(7, 1)];
        s.validate().unwrap();
    }

    #[test]
    fn inversion_bounded_by_tone_count() {
        let mut s = sheet();
        let chord = |quality, inversion| HarmonyChord {
            onset_beats: Fixed::ZERO,
            duration_beats: Fixed::from_int(4),
            root_degree: 1,
            quality,
            inversion,
        };
        s.harmony = vec![chord(ChordQuality::Major, 3)];
        assert!(s.validate().is_err());
        s.harmony = vec![chord(ChordQuality::Dominant7, 3)];
        s.validate().unwrap();
    }

    #[test]
    fn tempo_and_key_ranges() {
        let mut s = sheet();
        s.tempo = Tempo::from_bpm(19);
        assert!(s.validate().is_err());
        s.tempo = Tempo::from_bpm(300);
        s.validate().unwrap();
        s.key.tonic_pitch_class = 12;
        assert!(s.validate().is_err());
    }

    #[test]
    fn melody_pitch_range_enforced() {
        let mut s = sheet();
        // B major, degree 7, octave 6, sharp: 84 + 11 + 11 + 1 = 107
        s.key = KeySignature::new(11, Mode::Major);
        s.melody = vec![MelodyNote {
            scale_degree: 7,
            octave: 6,
            alteration: 1,
            ..note(0, 1)
        }];
        assert!(s.validate().is_err());
    }
}

use super::{
    Beats, ChordQuality, Fixed, HarmonyChord, Instrument, KeySignature, LeadSheet, NoteEvent,
    SheetError, Tempo,
};

pub const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
pub const MINOR_SCALE: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

/// Accented click on the first beat of each measure.
pub const CLICK_DOWNBEAT_PITCH: u8 = 34;
pub const CLICK_PITCH: u8 = 33;

/// Lowest pitch of the octave chord roots are folded into.
const CHORD_ROOT_FLOOR: i32 = 48;

pub fn beats_to_seconds(beats: Beats, tempo: Tempo) -> f64 {
    debug_assert!(!beats.is_negative());
    // both sides are in millionths, so the scale cancels
    beats.micros() as f64 * 60.0 / tempo.bpm.micros() as f64
}

/// Inverse of [`beats_to_seconds`], rounded to the nearest millionth of a beat.
pub fn seconds_to_beats(seconds: f64, tempo: Tempo) -> Beats {
    Fixed::from_f64(seconds * tempo.bpm.as_f64() / 60.0)
}

pub fn melody_pitch(key: KeySignature, degree: u8, octave: i8, alteration: i8) -> i32 {
    12 * (octave as i32 + 1)
        + key.tonic_pitch_class as i32
        + key.mode.scale()[degree as usize - 1]
        + alteration as i32
}

/// Functional spelling `(degree, octave, alteration)` of a MIDI pitch.
///
/// Prefers an unaltered degree; otherwise the lowest degree reachable with a
/// single sharp or flat. Returns `None` when the spelling falls outside the
/// melody range (octaves 2..=6, pitches 24..=96).
pub fn melody_from_pitch(key: KeySignature, pitch: u8) -> Option<(u8, i8, i8)> {
    let pitch = pitch as i32;
    let tonic = key.tonic_pitch_class as i32;
    let scale = key.mode.scale();
    let rel = (pitch - tonic).rem_euclid(12);
    let (degree_idx, alteration) = scale
        .iter()
        .position(|&o| o == rel)
        .map(|d| (d, 0))
        .or_else(|| {
            (0..7).find_map(|d| {
                [1, -1]
                    .into_iter()
                    .find(|alt| (scale[d] + alt).rem_euclid(12) == rel)
                    .map(|alt| (d, alt))
            })
        })?;
    let base = pitch - tonic - scale[degree_idx] - alteration;
    debug_assert_eq!(base.rem_euclid(12), 0);
    let octave = base.div_euclid(12) - 1;
    if !(2..=6).contains(&octave) || !(24..=96).contains(&pitch) {
        return None;
    }
    Some((degree_idx as u8 + 1, octave as i8, alteration as i8))
}

/// Chord tones from lowest to highest, including the inversion.
pub fn chord_pitches(
    key: KeySignature,
    root_degree: u8,
    quality: ChordQuality,
    inversion: u8,
) -> Vec<i32> {
    let tonic = key.tonic_pitch_class as i32;
    let scale = key.mode.scale();
    let root_idx = root_degree as usize - 1;
    let root_class = (tonic + scale[root_idx]).rem_euclid(12);
    let root_pitch = CHORD_ROOT_FLOOR + root_class;
    let mut tones: Vec<i32> = match quality.template() {
        Some(template) => template.iter().map(|t| root_pitch + t).collect(),
        None => {
            let shift = root_pitch - (CHORD_ROOT_FLOOR + tonic + scale[root_idx]);
            (0..quality.tone_count())
                .map(|k| {
                    let idx = root_idx + 2 * k;
                    CHORD_ROOT_FLOOR + tonic + scale[idx % 7] + 12 * (idx / 7) as i32 + shift
                })
                .collect()
        }
    };
    let inversion = inversion as usize;
    for tone in tones.iter_mut().take(inversion) {
        *tone += 12;
    }
    tones.rotate_left(inversion);
    tones
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChordVoicing {
    pub root_degree: u8,
    pub quality: ChordQuality,
    pub inversion: u8,
    /// Ascending.
    pub pitches: Vec<u8>,
}

/// Every chord the functional model can express in `key`, in recognition
/// preference order: scale-stacked qualities first, then lower roots, then
/// lower inversions.
pub fn chord_voicings(key: KeySignature) -> Vec<ChordVoicing> {
    let mut out = Vec::new();
    for quality in ChordQuality::ALL {
        for root_degree in 1..=7u8 {
            for inversion in 0..quality.tone_count() as u8 {
                let pitches = chord_pitches(key, root_degree, quality, inversion)
                    .into_iter()
                    .map(|p| p as u8)
                    .collect();
                out.push(ChordVoicing {
                    root_degree,
                    quality,
                    inversion,
                    pitches,
                });
            }
        }
    }
    out
}

/// Functional chord whose realization is exactly `pitches` (any order).
pub fn chord_from_pitches(key: KeySignature, pitches: &[u8]) -> Option<(u8, ChordQuality, u8)> {
    let mut sorted = pitches.to_vec();
    sorted.sort_unstable();
    chord_voicings(key)
        .into_iter()
        .find(|v| v.pitches == sorted)
        .map(|v| (v.root_degree, v.quality, v.inversion))
}

fn checked_pitch(pitch: i32) -> Result<u8, SheetError> {
    if (0..=127).contains(&pitch) {
        Ok(pitch as u8)
    } else {
        Err(SheetError::Realization {
            pitch,
            min: 0,
            max: 127,
        })
    }
}

pub fn realize_melody(sheet: &LeadSheet) -> Result<Vec<NoteEvent>, SheetError> {
    let mut out = sheet
        .melody
        .iter()
        .map(|n| {
            let pitch = checked_pitch(melody_pitch(
                sheet.key,
                n.scale_degree,
                n.octave,
                n.alteration,
            ))?;
            Ok(NoteEvent::new(
                beats_to_seconds(n.onset_beats, sheet.tempo),
                beats_to_seconds(n.duration_beats, sheet.tempo),
                Instrument::Melody,
                pitch,
            ))
        })
        .collect::<Result<Vec<_>, SheetError>>()?;
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(out)
}

pub fn realize_chord(
    sheet: &LeadSheet,
    chord: &HarmonyChord,
) -> Result<Vec<NoteEvent>, SheetError> {
    let start = beats_to_seconds(chord.onset_beats, sheet.tempo);
    let duration = beats_to_seconds(chord.duration_beats, sheet.tempo);
    chord_pitches(sheet.key, chord.root_degree, chord.quality, chord.inversion)
        .into_iter()
        .map(|p| {
            Ok(NoteEvent::new(
                start,
                duration,
                Instrument::Harmony,
                checked_pitch(p)?,
            ))
        })
        .collect()
}

pub fn realize_harmony(sheet: &LeadSheet) -> Result<Vec<NoteEvent>, SheetError> {
    let mut out = Vec::new();
    for chord in &sheet.harmony {
        out.extend(realize_chord(sheet, chord)?);
    }
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.pitch.cmp(&b.pitch)));
    Ok(out)
}

pub fn click_track(sheet: &LeadSheet) -> Vec<NoteEvent> {
    let per_measure = sheet.meter.beats_per_measure as u32;
    let beat = beats_to_seconds(Fixed::from_int(1), sheet.tempo);
    (0..sheet.total_beats())
        .map(|k| {
            let pitch = if k % per_measure == 0 {
                CLICK_DOWNBEAT_PITCH
            } else {
                CLICK_PITCH
            };
            NoteEvent::new(
                beats_to_seconds(Fixed::from_int(k as i64), sheet.tempo),
                beat,
                Instrument::Click,
                pitch,
            )
        })
        .collect()
}

/// The three note sets of a realized lead sheet.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedSheet {
    pub melody: Vec<NoteEvent>,
    pub harmony: Vec<NoteEvent>,
    pub click: Vec<NoteEvent>,
}

pub fn realize_all(sheet: &LeadSheet) -> Result<RealizedSheet, SheetError> {
    Ok(RealizedSheet {
        melody: realize_melody(sheet)?,
        harmony: realize_harmony(sheet)?,
        click: click_track(sheet),
    })
}

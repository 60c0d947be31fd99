//! Plain-text lead-sheet documents.
//!
//! ```text
//! key: C
//! mode: major
//! meter: 4/4
//! bpm: 120
//! measures: 2
//! melody:
//! 0 1 1 4 0
//! 1 0.5 2 4 0
//! harmony:
//! 0 4 1 triad_diatonic 0
//! ```
//!
//! Melody lines are `onset duration degree octave alteration`, harmony lines
//! are `onset duration root_degree quality inversion`. Blank lines and lines
//! starting with `#` are ignored. Serialization is canonical, so a document
//! produced by [`serialize_leadsheet`] parses and re-serializes byte-for-byte.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{
    BeatUnit, ChordQuality, Fixed, HarmonyChord, KeySignature, LeadSheet, MelodyNote, Meter, Mode,
    SheetError, Tempo,
};

const KEY_NAMES: [&str; 12] = [
    "C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B",
];
const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

fn key_from_name(name: &str) -> Option<u8> {
    KEY_NAMES
        .iter()
        .position(|&n| n == name)
        .or_else(|| SHARP_NAMES.iter().position(|&n| n == name))
        .map(|p| p as u8)
}

pub fn serialize_leadsheet(sheet: &LeadSheet) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "key: {}",
        KEY_NAMES[sheet.key.tonic_pitch_class as usize % 12]
    );
    let _ = writeln!(out, "mode: {}", sheet.key.mode.name());
    let _ = writeln!(out, "meter: {}", sheet.meter);
    let _ = writeln!(out, "bpm: {}", sheet.tempo.bpm);
    let _ = writeln!(out, "measures: {}", sheet.length_measures);
    out.push_str("melody:\n");
    let mut melody = sheet.melody.clone();
    melody.sort_by_key(|n| n.onset_beats);
    for n in &melody {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            n.onset_beats, n.duration_beats, n.scale_degree, n.octave, n.alteration
        );
    }
    out.push_str("harmony:\n");
    let mut harmony = sheet.harmony.clone();
    harmony.sort_by_key(|c| c.onset_beats);
    for c in &harmony {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            c.onset_beats,
            c.duration_beats,
            c.root_degree,
            c.quality.name(),
            c.inversion
        );
    }
    out
}

#[derive(PartialEq)]
enum Section {
    Header,
    Melody,
    Harmony,
}

struct Cursor {
    line: usize,
}

impl Cursor {
    fn err(&self, field: &str, message: impl Into<String>) -> SheetError {
        SheetError::Parse {
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn field<T: FromStr>(&self, field: &str, raw: &str) -> Result<T, SheetError>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse::<T>()
            .map_err(|e| self.err(field, format!("{raw:?}: {e}")))
    }
}

/// Parse and validate a lead-sheet document. Notes are sorted by onset.
pub fn parse_leadsheet(text: &str) -> Result<LeadSheet, SheetError> {
    let mut key: Option<u8> = None;
    let mut mode: Option<Mode> = None;
    let mut meter: Option<Meter> = None;
    let mut bpm: Option<Fixed> = None;
    let mut measures: Option<u32> = None;
    let mut melody = Vec::new();
    let mut harmony = Vec::new();
    let mut section = Section::Header;
    let mut seen_melody = false;
    let mut seen_harmony = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let cur = Cursor { line: idx + 1 };
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "melody:" {
            if seen_melody {
                return Err(cur.err("melody", "duplicate melody section"));
            }
            seen_melody = true;
            section = Section::Melody;
            continue;
        }
        if line == "harmony:" {
            if seen_harmony {
                return Err(cur.err("harmony", "duplicate harmony section"));
            }
            seen_harmony = true;
            section = Section::Harmony;
            continue;
        }
        match section {
            Section::Header => {
                let (name, value) = line.split_once(':').ok_or_else(|| {
                    cur.err("header", format!("expected `name: value`, got {line:?}"))
                })?;
                let (name, value) = (name.trim(), value.trim());
                // a repeated header would be a mid-song change of a global attribute
                let duplicate = |present: bool| {
                    if present {
                        Err(cur.err(
                            name,
                            "repeated header; key, meter and tempo are global to the song",
                        ))
                    } else {
                        Ok(())
                    }
                };
                match name {
                    "key" => {
                        duplicate(key.is_some())?;
                        key = Some(match key_from_name(value) {
                            Some(k) => k,
                            None => cur.field::<u8>("key", value)?,
                        });
                    }
                    "mode" => {
                        duplicate(mode.is_some())?;
                        mode = Some(cur.field("mode", value)?);
                    }
                    "meter" => {
                        duplicate(meter.is_some())?;
                        let (num, den) = value.split_once('/').ok_or_else(|| {
                            cur.err("meter", format!("expected N/D, got {value:?}"))
                        })?;
                        let beats_per_measure: u8 = cur.field("meter", num.trim())?;
                        let den: u8 = cur.field("meter", den.trim())?;
                        let beat_unit = BeatUnit::from_denominator(den).ok_or_else(|| {
                            cur.err("meter", format!("beat unit must be 2, 4 or 8, got {den}"))
                        })?;
                        meter = Some(Meter {
                            beats_per_measure,
                            beat_unit,
                        });
                    }
                    "bpm" => {
                        duplicate(bpm.is_some())?;
                        bpm = Some(cur.field("bpm", value)?);
                    }
                    "measures" => {
                        duplicate(measures.is_some())?;
                        measures = Some(cur.field("measures", value)?);
                    }
                    other => return Err(cur.err(other, "unknown header field")),
                }
            }
            Section::Melody => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(
                        cur.err("melody", format!("expected 5 fields, got {}", parts.len()))
                    );
                }
                melody.push(MelodyNote {
                    onset_beats: cur.field("onset_beats", parts[0])?,
                    duration_beats: cur.field("duration_beats", parts[1])?,
                    scale_degree: cur.field("degree", parts[2])?,
                    octave: cur.field("octave", parts[3])?,
                    alteration: cur.field("alteration", parts[4])?,
                });
            }
            Section::Harmony => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(
                        cur.err("harmony", format!("expected 5 fields, got {}", parts.len()))
                    );
                }
                harmony.push(HarmonyChord {
                    onset_beats: cur.field("onset_beats", parts[0])?,
                    duration_beats: cur.field("duration_beats", parts[1])?,
                    root_degree: cur.field("root_degree", parts[2])?,
                    quality: cur.field::<ChordQuality>("quality", parts[3])?,
                    inversion: cur.field("inversion", parts[4])?,
                });
            }
        }
    }

    let end = Cursor {
        line: text.lines().count(),
    };
    let missing = |f: &str| end.err(f, "missing header field");
    let mut sheet = LeadSheet {
        key: KeySignature::new(
            key.ok_or_else(|| missing("key"))?,
            mode.ok_or_else(|| missing("mode"))?,
        ),
        meter: meter.ok_or_else(|| missing("meter"))?,
        tempo: Tempo {
            bpm: bpm.ok_or_else(|| missing("bpm"))?,
        },
        length_measures: measures.ok_or_else(|| missing("measures"))?,
        melody,
        harmony,
    };
    sheet.sort();
    sheet.validate()?;
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
key: Eb
mode: minor
meter: 3/4
bpm: 92.5
measures: 2
melody:
0 1 1 4 0
1 0.5 3 4 0
1.5 1.5 5 4 -1
harmony:
0 3 1 triad_diatonic 0
3 3 5 dominant7 1
";

    #[test]
    fn golden_roundtrip() {
        let sheet = parse_leadsheet(GOLDEN).unwrap();
        assert_eq!(sheet.key, KeySignature::new(3, Mode::Minor));
        assert_eq!(sheet.meter.beats_per_measure, 3);
        assert_eq!(sheet.tempo.bpm, Fixed::from_micros(92_500_000));
        assert_eq!(sheet.melody.len(), 3);
        assert_eq!(sheet.harmony[1].quality, ChordQuality::Dominant7);
        assert_eq!(serialize_leadsheet(&sheet), GOLDEN);
    }

    #[test]
    fn overlapping_melody_is_validation_error() {
        let doc = GOLDEN.replace("1 0.5 3 4 0", "0.5 0.5 3 4 0");
        assert!(matches!(
            parse_leadsheet(&doc),
            Err(SheetError::Validation(_))
        ));
    }

    #[test]
    fn empty_melody_is_fine() {
        let doc = "key: C\nmode: major\nmeter: 4/4\nbpm: 120\nmeasures: 1\nmelody:\nharmony:\n0 4 1 major 0\n";
        let sheet = parse_leadsheet(doc).unwrap();
        assert!(sheet.melody.is_empty());
        assert_eq!(sheet.harmony.len(), 1);
        assert_eq!(serialize_leadsheet(&sheet), doc);
    }

    #[test]
    fn parse_errors_carry_location() {
        let doc = GOLDEN.replace("1 0.5 3 4 0", "1 0.5 x 4 0");
        match parse_leadsheet(&doc) {
            Err(SheetError::Parse { line, field, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(field, "degree");
            }
            other => panic!("unexpected {other:?}"),
        }
        let doc = GOLDEN.replace("meter: 3/4", "meter: 3/5");
        assert!(matches!(
            parse_leadsheet(&doc),
            Err(SheetError::Parse { line: 3, .. })
        ));
        let doc = GOLDEN.replace("0 3 1 triad_diatonic 0", "0 3 1 sus4 0");
        assert!(matches!(
            parse_leadsheet(&doc),
            Err(SheetError::Parse { line: 11, .. })
        ));
    }

    #[test]
    fn global_changes_rejected() {
        let doc = GOLDEN.replace("measures: 2\n", "measures: 2\nbpm: 100\n");
        assert!(
            matches!(parse_leadsheet(&doc), Err(SheetError::Parse { field, .. }) if field == "bpm")
        );
    }

    #[test]
    fn missing_header_rejected() {
        let doc = GOLDEN.replace("mode: minor\n", "");
        assert!(
            matches!(parse_leadsheet(&doc), Err(SheetError::Parse { field, .. }) if field == "mode")
        );
    }

    #[test]
    fn lenient_input_is_canonicalized() {
        let doc = "# a comment\nkey: D#\nmode: minor\nmeter: 3/4\nbpm: 92.50\nmeasures: 2\n\nmelody:\n1 0.5 3 4 0\n0 1.0 1 4 0\n1.5 1.5 5 4 -1\nharmony:\n0 3 1 triad_diatonic 0\n3 3 5 dominant7 1\n";
        let sheet = parse_leadsheet(doc).unwrap();
        assert_eq!(serialize_leadsheet(&sheet), GOLDEN);
    }
}

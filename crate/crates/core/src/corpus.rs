//! Procedural lead sheets: common pop progressions with a chord-tone and
//! passing-tone melody on a quarter-beat grid.

use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::leadsheet::{
    parse_leadsheet, serialize_leadsheet, BeatUnit, ChordQuality, Fixed, HarmonyChord,
    KeySignature, LeadSheet, MelodyNote, Meter, Mode, Tempo,
};

/// Root degrees, one chord per measure, repeated to fill the song.
pub const PROGRESSIONS: [[u8; 4]; 5] = [
    [1, 6, 4, 5],
    [1, 4, 5, 1],
    [6, 4, 1, 5],
    [2, 5, 1, 1],
    [1, 5, 6, 4],
];

pub const FILE_EXTENSION: &str = "leadsheet";

fn pick_meter<R: Rng + ?Sized>(rng: &mut R) -> (Meter, Tempo) {
    let roll: f64 = rng.random();
    if roll < 0.6 {
        (
            Meter::FOUR_FOUR,
            Tempo::from_bpm(rng.random_range(70..=140)),
        )
    } else if roll < 0.85 {
        (
            Meter {
                beats_per_measure: 3,
                beat_unit: BeatUnit::Quarter,
            },
            Tempo::from_bpm(rng.random_range(70..=140)),
        )
    } else {
        // eighth-note pulse, so twice the quarter tempo
        (
            Meter {
                beats_per_measure: 6,
                beat_unit: BeatUnit::Eighth,
            },
            Tempo::from_bpm(2 * rng.random_range(70..=110)),
        )
    }
}

fn pick_quality<R: Rng + ?Sized>(rng: &mut R, mode: Mode, root: u8) -> ChordQuality {
    let roll: f64 = rng.random();
    match (mode, root) {
        (_, 5) if roll < 0.2 => ChordQuality::Dominant7,
        (Mode::Minor, 5) => ChordQuality::Major,
        _ if roll < 0.85 => ChordQuality::TriadDiatonic,
        _ => ChordQuality::SeventhDiatonic,
    }
}

/// Harmony with one chord per measure following `progression`.
pub fn progression_harmony<R: Rng + ?Sized>(
    rng: &mut R,
    sheet: &LeadSheet,
    progression: &[u8],
    vary: bool,
) -> Vec<HarmonyChord> {
    let per = sheet.meter.beats_per_measure as i64;
    (0..sheet.length_measures as i64)
        .map(|m| {
            let root = progression[m as usize % progression.len()];
            let (quality, inversion) = if vary {
                let q = pick_quality(rng, sheet.key.mode, root);
                (q, u8::from(rng.random_bool(0.2)))
            } else {
                (ChordQuality::TriadDiatonic, 0)
            };
            HarmonyChord {
                onset_beats: Fixed::from_int(m * per),
                duration_beats: Fixed::from_int(per),
                root_degree: root,
                quality,
                inversion,
            }
        })
        .collect()
}

/// Melody over `harmony`: each chord starts on its nearest chord tone, then
/// moves by step or small leap, with occasional rests.
pub fn walk_melody<R: Rng + ?Sized>(
    rng: &mut R,
    sheet: &LeadSheet,
    harmony: &[HarmonyChord],
) -> Vec<MelodyNote> {
    let quarter = Fixed::from_ratio(1, 4);
    let lengths: &[i64] = if sheet.meter.beat_unit == BeatUnit::Eighth {
        &[4, 8, 12]
    } else {
        &[2, 4, 4, 6, 8]
    };
    // scale index = 7 * octave + degree - 1, kept in octaves 4 and 5
    let (lo, hi) = (28i32, 41i32);
    let mut pos: i32 = rng.random_range(lo + 2..=hi - 4);
    let mut out = Vec::new();
    let total = sheet.total_beats_fixed();
    for chord in harmony {
        let mut t = chord.onset_beats;
        let end = chord.end_beats().min(total);
        let root = chord.root_degree as i32 - 1;
        let tones = [root, root + 2, root + 4];
        // nearest chord tone
        pos = (lo..=hi)
            .filter(|s| tones.iter().any(|c| (s - c).rem_euclid(7) == 0))
            .min_by_key(|s| (s - pos).abs())
            .unwrap_or(pos);
        let mut first = true;
        while t < end {
            let steps = *lengths.choose(rng).expect("nonempty");
            let mut dur = Fixed::from_micros(quarter.micros() * steps);
            if t + dur > end {
                dur = end - t;
            }
            if !first && rng.random_bool(0.1) {
                t = t + dur;
                continue;
            }
            if !first {
                let step = *[-2, -1, -1, 1, 1, 2].choose(rng).expect("nonempty");
                pos = (pos + step).clamp(lo, hi);
            }
            first = false;
            out.push(MelodyNote {
                onset_beats: t,
                duration_beats: dur,
                scale_degree: (pos % 7) as u8 + 1,
                octave: (pos / 7) as i8,
                alteration: 0,
            });
            t = t + dur;
        }
    }
    out
}

pub fn random_song<R: Rng + ?Sized>(rng: &mut R) -> LeadSheet {
    let mode = if rng.random_bool(0.75) {
        Mode::Major
    } else {
        Mode::Minor
    };
    let key = KeySignature::new(rng.random_range(0..12), mode);
    let (meter, tempo) = pick_meter(rng);
    let measures = *[4u32, 8].choose(rng).expect("nonempty");
    let mut sheet = LeadSheet::empty(key, meter, tempo, measures);
    let progression = *PROGRESSIONS.choose(rng).expect("nonempty");
    sheet.harmony = progression_harmony(rng, &sheet, &progression, true);
    sheet.melody = walk_melody(rng, &sheet, &sheet.harmony.clone());
    sheet
}

/// C major, 4/4 at 120 bpm, four measures of I-IV-V-I root-position triads,
/// with a random melody.
pub fn degenerate_song<R: Rng + ?Sized>(rng: &mut R) -> LeadSheet {
    let mut sheet = LeadSheet::empty(
        KeySignature::C_MAJOR,
        Meter::FOUR_FOUR,
        Tempo::from_bpm(120),
        4,
    );
    sheet.harmony = progression_harmony(rng, &sheet, &[1, 4, 5, 1], false);
    sheet.melody = walk_melody(rng, &sheet, &sheet.harmony.clone());
    sheet
}

fn song_id(index: usize) -> String {
    format!("song-{index:05}")
}

/// `songs` random sheets; song `i` uses stream `i` of the seeded generator.
pub fn generate_corpus(songs: usize, seed: u64) -> Vec<(String, LeadSheet)> {
    generate_with(songs, seed, random_song)
}

pub fn generate_degenerate_corpus(songs: usize, seed: u64) -> Vec<(String, LeadSheet)> {
    generate_with(songs, seed, degenerate_song)
}

fn generate_with(
    songs: usize,
    seed: u64,
    make: impl Fn(&mut ChaCha8Rng) -> LeadSheet,
) -> Vec<(String, LeadSheet)> {
    (0..songs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            (song_id(i), make(&mut rng))
        })
        .collect()
}

/// One `<id>.leadsheet` document per song.
pub fn write_corpus(dir: &Path, corpus: &[(String, LeadSheet)]) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    corpus
        .iter()
        .map(|(id, sheet)| {
            let path = dir.join(format!("{id}.{FILE_EXTENSION}"));
            std::fs::write(&path, serialize_leadsheet(sheet))?;
            Ok(path)
        })
        .collect()
}

/// Every `.leadsheet` file in `dir`, sorted by file name. Unparseable files
/// are returned as errors alongside their id.
pub fn read_corpus(dir: &Path) -> io::Result<Vec<(String, Result<LeadSheet, String>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == FILE_EXTENSION))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = std::fs::read_to_string(&p)?;
            Ok((id, parse_leadsheet(&text).map_err(|e| e.to_string())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anticipate::{interleave, partition, tokenize, Capability, Span, Vocabulary};
    use crate::leadsheet::realize_all;

    fn tokenizes(s: &LeadSheet) -> Result<(), String> {
        let v = Vocabulary::default();
        let r = realize_all(s).map_err(|e| e.to_string())?;
        let span = Span {
            t_s: 0.0,
            t_e: s.duration_seconds(),
        };
        for cap in Capability::ALL {
            let parts = partition(&r.melody, &r.harmony, &r.click, span, cap);
            tokenize(&interleave(&parts, v.anticipation_s), &v, true).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    #[test]
    fn songs_are_valid_and_deterministic() {
        let a = generate_corpus(60, 3);
        assert_eq!(a, generate_corpus(60, 3));
        for (id, s) in &a {
            s.validate().unwrap_or_else(|e| panic!("{id}: {e}"));
            assert!(!s.melody.is_empty());
            assert_eq!(s.harmony.len(), s.length_measures as usize);
            tokenizes(s).unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }

    #[test]
    fn degenerate_songs_have_fixed_harmony() {
        for (_, s) in generate_degenerate_corpus(20, 1) {
            s.validate().unwrap();
            let roots: Vec<u8> = s.harmony.iter().map(|c| c.root_degree).collect();
            assert_eq!(roots, vec![1, 4, 5, 1]);
            assert!(s
                .harmony
                .iter()
                .all(|c| c.quality == ChordQuality::TriadDiatonic && c.inversion == 0));
        }
    }

    #[test]
    fn corpus_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(5, 8);
        write_corpus(dir.path(), &corpus).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        let back: Vec<(String, LeadSheet)> =
            back.into_iter().map(|(id, s)| (id, s.unwrap())).collect();
        assert_eq!(back, corpus);
    }
}

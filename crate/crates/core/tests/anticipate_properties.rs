use cadenza_core::anticipate::{
    detokenize, interleave, interleave_key_us, partition, tokenize, Capability, Span, Vocabulary,
    ANTICIPATION_S,
};
use cadenza_core::leadsheet::{
    parse_leadsheet, realize_all, serialize_leadsheet, BeatUnit, ChordQuality, Fixed, HarmonyChord,
    Instrument, KeySignature, LeadSheet, MelodyNote, Meter, Mode, NoteEvent, Tempo,
};
use proptest::prelude::*;

fn step(den: i64, k: i64) -> Fixed {
    Fixed::from_ratio(k, den)
}

/// Back-to-back notes with optional rests, drawn from per-note parameters.
fn sheet_strategy() -> impl Strategy<Value = LeadSheet> {
    let header = (
        0u8..12,
        any::<bool>(),
        1u8..=12,
        0usize..3,
        160i64..=1200,
        1u32..=8,
    );
    let melody = prop::collection::vec(
        (
            prop::sample::select(vec![1i64, 2, 3, 4]),
            0i64..3,
            1i64..=4,
            1u8..=7,
            3i8..=5,
            -1i8..=1,
        ),
        0..40,
    );
    let harmony = prop::collection::vec((0i64..2, 1i64..=4, 1u8..=7, 0usize..7, 0u8..4), 0..12);
    (header, melody, harmony).prop_map(
        |((tonic, major, beats, unit, quarter_bpm, measures), melody, harmony)| {
            let mode = if major { Mode::Major } else { Mode::Minor };
            let meter = Meter {
                beats_per_measure: beats,
                beat_unit: [BeatUnit::Half, BeatUnit::Quarter, BeatUnit::Eighth][unit],
            };
            let tempo = Tempo {
                bpm: Fixed::from_ratio(quarter_bpm, 4),
            };
            let mut sheet =
                LeadSheet::empty(KeySignature::new(tonic, mode), meter, tempo, measures);
            let total = sheet.total_beats_fixed();
            let mut t = Fixed::ZERO;
            for (den, rest, len, degree, octave, alteration) in melody {
                let start = t + step(den, rest);
                let dur = step(den, len);
                if start + dur > total {
                    break;
                }
                sheet.melody.push(MelodyNote {
                    onset_beats: start,
                    duration_beats: dur,
                    scale_degree: degree,
                    octave,
                    alteration,
                });
                t = start + dur;
            }
            let mut t = Fixed::ZERO;
            for (rest, len, root, quality, inversion) in harmony {
                let quality = ChordQuality::ALL[quality];
                let start = t + Fixed::from_int(rest);
                let dur = Fixed::from_int(len);
                if start + dur > total {
                    break;
                }
                let inversion = inversion % quality.tone_count() as u8;
                sheet.harmony.push(HarmonyChord {
                    onset_beats: start,
                    duration_beats: dur,
                    root_degree: root,
                    quality,
                    inversion,
                });
                t = start + dur;
            }
            sheet
        },
    )
}

fn capability_strategy() -> impl Strategy<Value = Capability> {
    prop::sample::select(Capability::ALL.to_vec())
}

fn sorted_keys(notes: &[NoteEvent]) -> Vec<(u64, u64, Instrument, u8)> {
    let mut keys: Vec<_> = notes
        .iter()
        .map(|n| {
            (
                n.start_s.to_bits(),
                n.duration_s.to_bits(),
                n.instrument,
                n.pitch,
            )
        })
        .collect();
    keys.sort();
    keys
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialized_sheets_parse_back_identically(sheet in sheet_strategy()) {
        prop_assert!(sheet.validate().is_ok());
        let text = serialize_leadsheet(&sheet);
        let back = parse_leadsheet(&text).unwrap();
        prop_assert_eq!(&back, &sheet);
        prop_assert_eq!(serialize_leadsheet(&back), text);
    }

    #[test]
    fn fixed_display_parses_back(micros in -10_000_000_000i64..10_000_000_000) {
        let x = Fixed::from_micros(micros);
        prop_assert_eq!(x.to_string().parse::<Fixed>().unwrap(), x);
    }

    #[test]
    fn partition_splits_every_note_once(
        sheet in sheet_strategy(),
        capability in capability_strategy(),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let r = realize_all(&sheet).unwrap();
        let end = sheet.duration_seconds();
        let span = Span::new(end * a.min(b), end * a.max(b) + 1e-3).unwrap();
        let p = partition(&r.melody, &r.harmony, &r.click, span, capability);
        let all: Vec<NoteEvent> = r.melody.iter().chain(&r.harmony).chain(&r.click).copied().collect();
        let union: Vec<NoteEvent> = p.events.iter().chain(&p.controls).copied().collect();
        prop_assert_eq!(sorted_keys(&union), sorted_keys(&all));
        prop_assert!(p.events.iter().all(|n| n.instrument != Instrument::Click));
        if capability == Capability::LeftToRight {
            prop_assert_eq!(p.events.len(), r.melody.len() + r.harmony.len());
        } else {
            prop_assert!(p.events.iter().all(|n| n.start_s < span.t_e));
        }
        if !capability.generates_melody() {
            prop_assert!(p.events.iter().filter(|n| n.instrument == Instrument::Melody).all(|n| n.start_s < span.t_s));
        }
        if !capability.generates_harmony() {
            prop_assert!(p.events.iter().filter(|n| n.instrument == Instrument::Harmony).all(|n| n.start_s < span.t_s));
        }
    }

    #[test]
    fn interleaving_orders_by_key_and_keeps_controls_early(
        sheet in sheet_strategy(),
        capability in capability_strategy(),
        a in 0.0f64..1.0,
    ) {
        let r = realize_all(&sheet).unwrap();
        let span = Span::new(sheet.duration_seconds() * a, sheet.duration_seconds() + 1.0).unwrap();
        let p = partition(&r.melody, &r.harmony, &r.click, span, capability);
        let seq = interleave(&p, ANTICIPATION_S);
        prop_assert_eq!(seq.len(), p.events.len() + p.controls.len());
        let keys: Vec<i64> = seq.iter().map(|(n, c)| interleave_key_us(n, *c, ANTICIPATION_S)).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        let mut latest_event = f64::NEG_INFINITY;
        for (n, control) in &seq {
            if *control {
                prop_assert!(latest_event < n.start_s);
            } else {
                latest_event = latest_event.max(n.start_s);
            }
        }
    }

    #[test]
    fn tokens_decode_within_half_a_bin_and_reencode_exactly(
        sheet in sheet_strategy(),
        capability in capability_strategy(),
        a in 0.0f64..1.0,
    ) {
        let vocab = Vocabulary::default();
        let r = realize_all(&sheet).unwrap();
        let span = Span::new(sheet.duration_seconds() * a, sheet.duration_seconds() + 1.0).unwrap();
        let seq = interleave(&partition(&r.melody, &r.harmony, &r.click, span, capability), ANTICIPATION_S);
        let tokens = tokenize(&seq, &vocab, true).unwrap();
        prop_assert_eq!(tokens.triple_count(), seq.len());
        let decoded = detokenize(&tokens, &vocab).unwrap();
        prop_assert_eq!(decoded.len(), seq.len());
        for ((n, c), (d, dc)) in seq.iter().zip(&decoded) {
            prop_assert_eq!((n.instrument, n.pitch, c), (d.instrument, d.pitch, dc));
            prop_assert!((n.start_s - d.start_s).abs() <= 0.005 + 1e-9);
            prop_assert!((n.duration_s - d.duration_s).abs() <= 0.005 + 1e-9);
        }
        prop_assert_eq!(tokenize(&decoded, &vocab, true).unwrap(), tokens);
    }
}

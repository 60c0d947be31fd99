use std::sync::OnceLock;

use cadenza_core::anticipate::{build_dataset, detokenize, Capability, Vocabulary, CONTROL_OFFSET};
use cadenza_core::corpus::{generate_corpus, random_song};
use cadenza_core::engine::{
    accept, build_conditioning, generate, next_alternative, session_rng, EngineError,
    GenerationRequest,
};
use cadenza_core::leadsheet::{
    beats_to_seconds, chord_pitches, melody_pitch, parse_leadsheet, realize_all,
    serialize_leadsheet, ChordQuality, Fixed, HarmonyChord, Instrument, KeySignature, LeadSheet,
    Meter, Tempo,
};
use cadenza_core::model::{
    NGramModel, SamplingPolicy, SequenceModel, DEFAULT_ORDER, DEFAULT_SMOOTHING,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> &'static NGramModel {
    static MODEL: OnceLock<NGramModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let vocab = Vocabulary::default();
        let data = build_dataset(&generate_corpus(40, 5), 8, 5, &vocab);
        let seqs: Vec<Vec<u32>> = data.records.into_iter().map(|r| r.tokens).collect();
        let mut m = NGramModel::new(DEFAULT_ORDER, DEFAULT_SMOOTHING, vocab.size());
        m.fit(&seqs);
        m
    })
}

fn random_request(rng: &mut ChaCha8Rng) -> GenerationRequest {
    let sheet = random_song(rng);
    let total = sheet.total_beats();
    let start = rng.random_range(0..total);
    let end = rng.random_range(start + 1..=total.min(start + 8));
    let capability = Capability::ALL[rng.random_range(0..4)];
    let mut req = GenerationRequest::new(sheet, (start, end), capability);
    req.policy = SamplingPolicy {
        temperature: rng.random_range(0.5..1.5),
        top_p: 0.95,
    };
    req
}

#[test]
fn suggestions_stay_in_span_and_stream() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut notes = 0;
    for case in 0..150 {
        let req = random_request(&mut rng);
        let s = generate(&req, model(), &mut session_rng(case, 0), &vocab).unwrap();
        let (start, end) = (req.start_beats(), req.end_beats());
        for n in &s.generated_melody {
            assert!(n.onset_beats >= start && n.onset_beats < end);
            assert!(n.end_beats() <= end);
        }
        for c in &s.generated_harmony {
            assert!(c.onset_beats >= start && c.onset_beats < end);
            assert!(c.end_beats() <= end);
        }
        match req.capability {
            Capability::MelToHarm => assert!(s.generated_melody.is_empty()),
            Capability::HarmToMel => assert!(s.generated_harmony.is_empty()),
            _ => {}
        }
        notes += s.note_count();
        let accepted = accept(&req.sheet, &s).unwrap();
        assert_eq!(
            parse_leadsheet(&serialize_leadsheet(&accepted)).unwrap(),
            accepted
        );
    }
    assert!(notes > 150, "only {notes} notes generated");
}

#[test]
fn trace_is_key_monotonic_and_pitches_close() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..60 {
        let req = random_request(&mut rng);
        let s = generate(&req, model(), &mut session_rng(case, 3), &vocab).unwrap();
        let decoded = detokenize(&s.token_trace, &vocab).unwrap();
        let keys: Vec<f64> = decoded
            .iter()
            .map(|(n, c)| if *c { n.start_s - 5.0 } else { n.start_s })
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1] + 1e-9), "case {case}");
        // generated events after the prompt realize back to the sampled pitches
        let prompt_len = build_conditioning(&req, &vocab)
            .unwrap()
            .prompt
            .tokens
            .len();
        let tail = &s.token_trace.tokens[prompt_len..];
        let mut sampled: Vec<(Instrument, u8)> = tail
            .chunks(3)
            .filter(|t| t.len() == 3 && t[0] < CONTROL_OFFSET)
            .map(|t| {
                let local = t[2] - 2000;
                (
                    Instrument::from_index(local / 128).unwrap(),
                    (local % 128) as u8,
                )
            })
            .collect();
        let mut realized: Vec<(Instrument, u8)> = s
            .generated_melody
            .iter()
            .map(|n| {
                (
                    Instrument::Melody,
                    melody_pitch(req.sheet.key, n.scale_degree, n.octave, n.alteration) as u8,
                )
            })
            .chain(s.generated_harmony.iter().flat_map(|c| {
                chord_pitches(req.sheet.key, c.root_degree, c.quality, c.inversion)
                    .into_iter()
                    .map(|p| (Instrument::Harmony, p as u8))
            }))
            .collect();
        sampled.sort();
        realized.sort();
        // snapping may merge notes, never invent them
        for r in &realized {
            assert!(
                sampled.binary_search(r).is_ok(),
                "case {case}: {r:?} not sampled"
            );
        }
    }
}

#[test]
fn alternatives_reproduce_in_isolation() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut req = random_request(&mut rng);
    req.capability = Capability::FillInMiddle;
    let seed = 1234;
    let mut chain = Vec::new();
    let mut cur = req.clone();
    for _ in 0..50 {
        let s = next_alternative(&cur, model(), seed, &vocab).unwrap();
        cur = s.request.clone();
        chain.push(s);
    }
    for (i, s) in chain.iter().enumerate() {
        let mut fresh = req.clone();
        fresh.alternative_index = i as u64 + 1;
        let again = generate(
            &fresh,
            model(),
            &mut session_rng(seed, fresh.alternative_index),
            &vocab,
        )
        .unwrap();
        assert_eq!(&again, s);
    }
}

#[test]
fn greedy_is_deterministic() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut req = random_request(&mut rng);
    req.policy = SamplingPolicy::greedy();
    let a = generate(&req, model(), &mut session_rng(1, 0), &vocab).unwrap();
    let b = generate(&req, model(), &mut session_rng(99, 0), &vocab).unwrap();
    assert_eq!(a, b);
}

fn ii_v_sheet() -> LeadSheet {
    let b = Fixed::from_int;
    let mut s = LeadSheet::empty(
        KeySignature::C_MAJOR,
        Meter::FOUR_FOUR,
        Tempo::from_bpm(100),
        4,
    );
    s.melody = cadenza_core::corpus::walk_melody(
        &mut ChaCha8Rng::seed_from_u64(2),
        &s,
        &[HarmonyChord {
            onset_beats: b(0),
            duration_beats: b(16),
            root_degree: 1,
            quality: ChordQuality::TriadDiatonic,
            inversion: 0,
        }],
    );
    s.harmony = (0..4)
        .map(|m| HarmonyChord {
            onset_beats: b(4 * m),
            duration_beats: b(4),
            root_degree: [2, 5, 1, 1][m as usize],
            quality: ChordQuality::TriadDiatonic,
            inversion: 0,
        })
        .collect();
    s
}

#[test]
fn accept_replaces_only_generated_stream_in_span() {
    let vocab = Vocabulary::default();
    let sheet = ii_v_sheet();
    let req = GenerationRequest::new(sheet.clone(), (4, 8), Capability::MelToHarm);
    let s = (0..20)
        .map(|i| generate(&req, model(), &mut session_rng(i, 0), &vocab).unwrap())
        .find(|s| !s.generated_harmony.is_empty())
        .expect("some alternative has harmony");
    let out = accept(&sheet, &s).unwrap();
    assert_eq!(out.melody, sheet.melody);
    let (start, end) = (Fixed::from_int(4), Fixed::from_int(8));
    let outside = |v: &[HarmonyChord]| {
        v.iter()
            .filter(|c| c.onset_beats < start || c.onset_beats >= end)
            .copied()
            .collect::<Vec<_>>()
    };
    assert_eq!(outside(&out.harmony), outside(&sheet.harmony));
    let inside: Vec<_> = out
        .harmony
        .iter()
        .filter(|c| c.onset_beats >= start && c.onset_beats < end)
        .copied()
        .collect();
    assert_eq!(inside, s.generated_harmony);
}

#[test]
fn accept_into_empty_span_adds_exactly_the_suggestion() {
    let vocab = Vocabulary::default();
    let sheet = LeadSheet::empty(
        KeySignature::new(2, cadenza_core::leadsheet::Mode::Minor),
        Meter::FOUR_FOUR,
        Tempo::from_bpm(90),
        4,
    );
    let req = GenerationRequest::new(sheet.clone(), (0, 8), Capability::LeftToRight);
    let s = (0..20)
        .map(|i| generate(&req, model(), &mut session_rng(i, 0), &vocab).unwrap())
        .find(|s| !s.is_empty())
        .expect("non-empty alternative");
    let out = accept(&sheet, &s).unwrap();
    assert_eq!(out.melody, s.generated_melody);
    assert_eq!(out.harmony, s.generated_harmony);
}

#[test]
fn accept_on_changed_sheet_conflicts() {
    let vocab = Vocabulary::default();
    let sheet = ii_v_sheet();
    let req = GenerationRequest::new(sheet.clone(), (4, 8), Capability::HarmToMel);
    let s = generate(&req, model(), &mut session_rng(0, 0), &vocab).unwrap();
    let mut edited = sheet.clone();
    edited.harmony.pop();
    assert!(matches!(
        accept(&edited, &s),
        Err(EngineError::Conflict { .. })
    ));
}

#[test]
fn sustained_note_before_span_is_respected() {
    // the chord from beat 0 lasts until beat 6, so harmony can only start at 6
    let vocab = Vocabulary::default();
    let b = Fixed::from_int;
    let mut sheet = LeadSheet::empty(
        KeySignature::C_MAJOR,
        Meter::FOUR_FOUR,
        Tempo::from_bpm(120),
        4,
    );
    sheet.harmony.push(HarmonyChord {
        onset_beats: b(0),
        duration_beats: b(6),
        root_degree: 1,
        quality: ChordQuality::TriadDiatonic,
        inversion: 0,
    });
    let req = GenerationRequest::new(sheet.clone(), (4, 8), Capability::MelToHarm);
    for i in 0..30 {
        let s = generate(&req, model(), &mut session_rng(i, 0), &vocab).unwrap();
        assert!(s.generated_harmony.iter().all(|c| c.onset_beats >= b(6)));
        accept(&sheet, &s).unwrap();
    }
}

#[test]
fn vocabulary_mismatch_is_model_unavailable() {
    let vocab = Vocabulary::default();
    let small = NGramModel::new(2, 0.01, 10);
    let req = GenerationRequest::new(ii_v_sheet(), (0, 4), Capability::LeftToRight);
    assert!(matches!(
        generate(&req, &small, &mut session_rng(0, 0), &vocab),
        Err(EngineError::ModelUnavailable(_))
    ));
}

#[test]
fn left_to_right_at_song_end_prompts_whole_song() {
    let vocab = Vocabulary::default();
    let sheet = ii_v_sheet();
    let total = sheet.total_beats();
    let req = GenerationRequest::new(sheet.clone(), (total - 4, total), Capability::LeftToRight);
    let c = build_conditioning(&req, &vocab).unwrap();
    let prompt = detokenize(&c.prompt, &vocab).unwrap();
    let t_s = beats_to_seconds(Fixed::from_int((total - 4) as i64), sheet.tempo);
    let r = realize_all(&sheet).unwrap();
    let want_events = r
        .melody
        .iter()
        .chain(&r.harmony)
        .filter(|n| n.start_s < t_s)
        .count();
    assert_eq!(prompt.iter().filter(|(_, c)| !c).count(), want_events);
    assert_eq!(
        prompt.iter().filter(|(_, c)| *c).count() + c.pending_controls.len(),
        r.click.len()
    );
    assert!(c
        .pending_controls
        .iter()
        .all(|q| q.instrument == Instrument::Click));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn confinement_holds_for_any_seed(seed in 0u64..10_000, index in 0u64..4) {
        let vocab = Vocabulary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let req = random_request(&mut rng);
        let s = generate(&req, model(), &mut session_rng(seed, index), &vocab).unwrap();
        let again = generate(&req, model(), &mut session_rng(seed, index), &vocab).unwrap();
        prop_assert_eq!(&s, &again);
        let end = req.end_beats();
        prop_assert!(s.generated_melody.iter().all(|n| n.onset_beats >= req.start_beats() && n.end_beats() <= end));
        prop_assert!(s.generated_harmony.iter().all(|c| c.onset_beats >= req.start_beats() && c.end_beats() <= end));
        let accepted = accept(&req.sheet, &s).unwrap();
        prop_assert!(accepted.validate().is_ok());
        prop_assert_eq!(s.model_version, model().model_version());
    }
}

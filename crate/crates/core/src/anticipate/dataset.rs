//! Random fine-tuning examples: pick a span, pick a capability, partition,
//! interleave, tokenize.
//!
//! Example file: one JSON object per line,
//! `{"song_id": str, "capability": str, "t_s": f64, "t_e": f64, "tokens": [u32]}`.
//! Manifest: one JSON object with `format_version`, `seed`, `vocab_hash`,
//! `songs`, `examples_per_song`, `total_examples`, `capability_histogram`
//! (all four capabilities, counts) and `skipped` (`song_id`, `reason`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{interleave, partition, tokenize, Capability, Span, TokenError, TokenSeq, Vocabulary};
use crate::leadsheet::{beats_to_seconds, realize_all, Fixed, LeadSheet};

const DATASET_FORMAT_VERSION: u32 = 1;
const SPAN_LENGTHS_MEASURES: [u32; 4] = [1, 2, 4, 8];
const MEASURE_ALIGNED_PROBABILITY: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneExample {
    pub tokens: TokenSeq,
    pub capability: Capability,
    pub span: Span,
}

/// Span in beats: dyadic length in measures (clamped to the song), starting
/// on a measure boundary 75% of the time and on any beat otherwise.
pub fn sample_span<R: Rng + ?Sized>(sheet: &LeadSheet, rng: &mut R) -> (u32, u32) {
    let per_measure = sheet.meter.beats_per_measure as u32;
    let measures = sheet.length_measures;
    let length =
        SPAN_LENGTHS_MEASURES[rng.random_range(0..SPAN_LENGTHS_MEASURES.len())].min(measures);
    let length_beats = length * per_measure;
    let start = if rng.random_bool(MEASURE_ALIGNED_PROBABILITY) {
        rng.random_range(0..=measures - length) * per_measure
    } else {
        rng.random_range(0..=sheet.total_beats() - length_beats)
    };
    (start, start + length_beats)
}

pub fn make_finetune_example<R: Rng + ?Sized>(
    sheet: &LeadSheet,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<FinetuneExample, TokenError> {
    let (start, end) = sample_span(sheet, rng);
    let capability = Capability::ALL[rng.random_range(0..Capability::ALL.len())];
    let span = Span {
        t_s: beats_to_seconds(Fixed::from_int(start as i64), sheet.tempo),
        t_e: beats_to_seconds(Fixed::from_int(end as i64), sheet.tempo),
    };
    // validated sheets always realize
    let realized = realize_all(sheet).expect("validated lead sheet realizes");
    let parts = partition(
        &realized.melody,
        &realized.harmony,
        &realized.click,
        span,
        capability,
    );
    let tokens = tokenize(&interleave(&parts, vocab.anticipation_s), vocab, true)?;
    Ok(FinetuneExample {
        tokens,
        capability,
        span,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub song_id: String,
    pub capability: Capability,
    pub t_s: f64,
    pub t_e: f64,
    pub tokens: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSong {
    pub song_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub vocab_hash: String,
    pub songs: usize,
    pub examples_per_song: usize,
    pub total_examples: usize,
    pub capability_histogram: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedSong>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<ExampleRecord>,
    pub manifest: DatasetManifest,
}

/// Song `i` draws from stream `i` of a ChaCha generator seeded with `seed`,
/// so the output is independent of scheduling.
pub fn build_dataset(
    corpus: &[(String, LeadSheet)],
    examples_per_song: usize,
    seed: u64,
    vocab: &Vocabulary,
) -> Dataset {
    assert!(!corpus.is_empty(), "corpus must not be empty");
    assert!(examples_per_song > 0);
    let per_song: Vec<Result<Vec<ExampleRecord>, SkippedSong>> = corpus
        .par_iter()
        .enumerate()
        .map(|(index, (song_id, sheet))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            (0..examples_per_song)
                .map(|_| {
                    let ex =
                        make_finetune_example(sheet, vocab, &mut rng).map_err(|e| SkippedSong {
                            song_id: song_id.clone(),
                            reason: e.to_string(),
                        })?;
                    Ok(ExampleRecord {
                        song_id: song_id.clone(),
                        capability: ex.capability,
                        t_s: ex.span.t_s,
                        t_e: ex.span.t_e,
                        tokens: ex.tokens.tokens,
                    })
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for result in per_song {
        match result {
            Ok(r) => records.extend(r),
            Err(s) => skipped.push(s),
        }
    }
    let mut capability_histogram: BTreeMap<String, usize> = Capability::ALL
        .iter()
        .map(|c| (c.name().to_string(), 0))
        .collect();
    for r in &records {
        *capability_histogram
            .entry(r.capability.name().to_string())
            .or_default() += 1;
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        seed,
        vocab_hash: vocab.hash(),
        songs: corpus.len(),
        examples_per_song,
        total_examples: records.len(),
        capability_histogram,
        skipped,
    };
    Dataset { records, manifest }
}

pub fn write_dataset(
    dataset: &Dataset,
    examples_path: &Path,
    manifest_path: &Path,
) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(examples_path)?);
    for record in &dataset.records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let mut manifest = serde_json::to_string_pretty(&dataset.manifest)?;
    manifest.push('\n');
    std::fs::write(manifest_path, manifest)
}

pub fn read_examples(path: &Path) -> io::Result<Vec<ExampleRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

//! Batch and developer entry points for every pipeline stage.
//!
//! Exit codes: 0 on success, 1 when the input is at fault (arguments, files,
//! settings), 2 for internal failures.

pub mod config;

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cadenza_core::anticipate::{
    build_dataset, detokenize, interleave, partition, read_examples, tokenize, write_dataset,
    Capability, SkippedSong, Span, Vocabulary,
};
use cadenza_core::corpus::{
    generate_corpus, generate_degenerate_corpus, read_corpus, write_corpus,
};
use cadenza_core::engine::{
    accept, generate, session_rng, EngineError, GenerationRequest, Suggestion,
};
use cadenza_core::leadsheet::{
    beats_to_seconds, parse_leadsheet, realize_all, serialize_leadsheet, Fixed, LeadSheet,
};
use cadenza_core::model::{
    load_checkpoint, mean_nll, save_checkpoint, split_heldout, train_ngram, train_transformer,
    LoadedModel, ModelError, SequenceModel, TinyTransformer, TinyTransformerConfig,
};
use cadenza_service::ServiceError;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{CliConfig, ModelKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
    /// The reader of standard output went away; not an error for a filter.
    #[error("output closed")]
    OutputClosed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::OutputClosed => 0,
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cadenza", version, about = "Lead-sheet songwriting copilot")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML settings file, shared with the service.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the interleaved token sequence of a lead sheet.
    Encode(EncodeArgs),
    /// Write procedural lead sheets to a directory.
    GenCorpus(GenCorpusArgs),
    /// Turn a corpus directory into tokenized fine-tuning examples.
    MakeDataset(MakeDatasetArgs),
    /// Train a model on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Generate a suggestion for a span and write the sheet with it accepted.
    Generate(GenerateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

/// `A:B` in whole beats, end exclusive.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BeatSpan(pub u32, pub u32);

impl FromStr for BeatSpan {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected START:END in beats, got {s:?}");
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        if start >= end {
            return Err(format!("span start {start} must be before its end {end}"));
        }
        Ok(BeatSpan(start, end))
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    pub sheet: PathBuf,
    /// Defaults to left_to_right.
    #[arg(long)]
    pub capability: Option<Capability>,
    /// Defaults to the whole song.
    #[arg(long, value_name = "START:END")]
    pub span: Option<BeatSpan>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub songs: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Every song uses the I-IV-V-I progression, one chord per measure.
    #[arg(long)]
    pub degenerate: bool,
}

#[derive(Debug, Args)]
pub struct MakeDatasetArgs {
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Examples file, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Defaults to the examples file with a `.manifest.json` extension.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub examples_per_song: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Optimizer steps (transformer only).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Context order (n-gram only).
    #[arg(long)]
    pub order: Option<usize>,
    /// Back off to the longest seen suffix (n-gram only).
    #[arg(long)]
    pub backoff: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub sheet: PathBuf,
    #[arg(long, value_name = "START:END")]
    pub span: BeatSpan,
    #[arg(long)]
    pub capability: Capability,
    #[arg(long, default_value_t = 0)]
    pub alternative: u64,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Where to write the updated sheet; standard output by default.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the suggestion as JSON.
    #[arg(long, value_name = "FILE")]
    pub suggestion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub store_dir: Option<PathBuf>,
}

/// Run `cli`, writing command output to `out`. Progress goes to stderr.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    let config = CliConfig::load(cli.config.as_deref()).map_err(user)?;
    let vocab = Vocabulary::default();
    match cli.command {
        Command::Encode(a) => encode(&a, &vocab, out),
        Command::GenCorpus(a) => gen_corpus(&a, cli.seed),
        Command::MakeDataset(a) => make_dataset(&a, &config, cli.seed, &vocab),
        Command::Train(a) => train(&a, &config, cli.seed, &vocab, out),
        Command::Generate(a) => generate_cmd(&a, &config, cli.seed, &vocab, out),
        Command::Serve(a) => serve(a, config),
    }
}

fn read_sheet(path: &Path) -> CliResult<LeadSheet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    parse_leadsheet(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    std::fs::write(path, contents)
        .map_err(|e| user(format!("cannot write {}: {e}", path.display())))
}

fn out_err(e: std::io::Error) -> CliError {
    match e.kind() {
        std::io::ErrorKind::BrokenPipe => CliError::OutputClosed,
        _ => internal(format!("cannot write output: {e}")),
    }
}

fn check_span(sheet: &LeadSheet, span: BeatSpan) -> CliResult {
    let total = sheet.total_beats();
    if span.1 > total {
        return Err(user(EngineError::SpanOutOfRange {
            start: span.0,
            end: span.1,
            total,
        }));
    }
    Ok(())
}

fn encode(args: &EncodeArgs, vocab: &Vocabulary, out: &mut dyn Write) -> CliResult {
    let sheet = read_sheet(&args.sheet)?;
    let span = args.span.unwrap_or(BeatSpan(0, sheet.total_beats()));
    check_span(&sheet, span)?;
    let capability = args.capability.unwrap_or(Capability::LeftToRight);
    let seconds = |b: u32| beats_to_seconds(Fixed::from_int(b as i64), sheet.tempo);
    let window = Span {
        t_s: seconds(span.0),
        t_e: seconds(span.1),
    };
    let realized = realize_all(&sheet).map_err(user)?;
    let parts = partition(
        &realized.melody,
        &realized.harmony,
        &realized.click,
        window,
        capability,
    );
    let seq = tokenize(&interleave(&parts, vocab.anticipation_s), vocab, true).map_err(user)?;
    let notes = detokenize(&seq, vocab).map_err(internal)?;

    writeln!(
        out,
        "# {capability} span {}:{} beats ({:.3}s to {:.3}s), {} triples, {} tokens",
        span.0,
        span.1,
        window.t_s,
        window.t_e,
        notes.len(),
        seq.tokens.len()
    )
    .map_err(out_err)?;
    writeln!(
        out,
        "#    i  time  dur note   onset_s  dur_s  instrument pitch kind"
    )
    .map_err(out_err)?;
    // tokens[0] is BOS; triples follow, then EOS
    for (i, ((note, control), ids)) in notes
        .iter()
        .zip(seq.tokens[1..].chunks_exact(3))
        .enumerate()
    {
        writeln!(
            out,
            "{i:6} {:5} {:4} {:4} {:9.2} {:6.2}  {:<10} {:5} {}",
            ids[0],
            ids[1],
            ids[2],
            note.start_s,
            note.duration_s,
            note.instrument.name(),
            note.pitch,
            if *control { "control" } else { "event" }
        )
        .map_err(out_err)?;
    }
    Ok(())
}

fn gen_corpus(args: &GenCorpusArgs, seed: u64) -> CliResult {
    let songs = args.songs as usize;
    let corpus = if args.degenerate {
        generate_degenerate_corpus(songs, seed)
    } else {
        generate_corpus(songs, seed)
    };
    write_corpus(&args.out, &corpus).map_err(|e| {
        user(format!(
            "cannot write corpus to {}: {e}",
            args.out.display()
        ))
    })?;
    eprintln!("wrote {songs} lead sheets to {}", args.out.display());
    Ok(())
}

fn make_dataset(
    args: &MakeDatasetArgs,
    config: &CliConfig,
    seed: u64,
    vocab: &Vocabulary,
) -> CliResult {
    let examples_per_song = args
        .examples_per_song
        .unwrap_or(config.dataset.examples_per_song);
    if examples_per_song == 0 {
        return Err(user("examples per song must be at least 1"));
    }
    let files = read_corpus(&args.corpus)
        .map_err(|e| user(format!("cannot read corpus {}: {e}", args.corpus.display())))?;
    let mut songs = Vec::new();
    let mut unreadable = Vec::new();
    for (song_id, sheet) in files {
        match sheet {
            Ok(s) => songs.push((song_id, s)),
            Err(reason) => unreadable.push(SkippedSong { song_id, reason }),
        }
    }
    if songs.is_empty() {
        return Err(user(format!(
            "no readable lead sheets in {}",
            args.corpus.display()
        )));
    }
    let mut dataset = build_dataset(&songs, examples_per_song, seed, vocab);
    dataset.manifest.songs += unreadable.len();
    dataset.manifest.skipped.extend(unreadable);
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.out.with_extension("manifest.json"));
    write_dataset(&dataset, &args.out, &manifest)
        .map_err(|e| user(format!("cannot write dataset: {e}")))?;
    eprintln!(
        "wrote {} examples from {} songs ({} skipped) to {}",
        dataset.manifest.total_examples,
        dataset.manifest.songs,
        dataset.manifest.skipped.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: ModelKind,
    model_version: String,
    steps: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    heldout_nll: Option<f64>,
    train_sequences: usize,
    heldout_sequences: usize,
    elapsed_seconds: f64,
    checkpoint: PathBuf,
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::DivergenceDetected { step, .. } => {
            user(format!("training diverged at step {step}"))
        }
        other => user(other),
    }
}

fn train(
    args: &TrainArgs,
    config: &CliConfig,
    seed: u64,
    vocab: &Vocabulary,
    out: &mut dyn Write,
) -> CliResult {
    let records = read_examples(&args.dataset).map_err(|e| {
        user(format!(
            "cannot read dataset {}: {e}",
            args.dataset.display()
        ))
    })?;
    let settings = &config.train;
    let mut optimizer = settings.optimizer.clone();
    optimizer.seed = seed;
    if let Some(steps) = args.steps {
        optimizer.steps = steps;
    }
    let (train_set, heldout) = split_heldout(&records, optimizer.heldout_fraction, seed);
    let kind = args.model.unwrap_or(settings.model);
    let started = std::time::Instant::now();

    let (model, summary) = match kind {
        ModelKind::Ngram => {
            let order = args.order.unwrap_or(settings.ngram.order);
            if order == 0 {
                return Err(user("n-gram order must be at least 1"));
            }
            let model = train_ngram(order, settings.ngram.smoothing, vocab.size(), &train_set)
                .map_err(model_error)?
                .with_backoff(args.backoff || settings.ngram.backoff);
            let heldout_nll = (!heldout.is_empty()).then(|| mean_nll(&model, &heldout));
            let model = LoadedModel::NGram(model);
            let summary = TrainSummary {
                model: kind,
                model_version: model.model_version(),
                steps: 0,
                initial_loss: None,
                final_loss: None,
                heldout_nll,
                train_sequences: train_set.len(),
                heldout_sequences: heldout.len(),
                elapsed_seconds: started.elapsed().as_secs_f64(),
                checkpoint: args.out.clone(),
            };
            (model, summary)
        }
        ModelKind::Transformer => {
            let cfg = TinyTransformerConfig {
                vocab_size: vocab.size(),
                ..settings.transformer.clone()
            };
            let init = TinyTransformer::new(cfg, seed).map_err(user)?;
            let (model, report) =
                train_transformer(init, &train_set, &heldout, &optimizer).map_err(model_error)?;
            let model = LoadedModel::Transformer(model);
            let summary = TrainSummary {
                model: kind,
                model_version: model.model_version(),
                steps: report.loss_curve.len(),
                initial_loss: report.initial_loss(),
                final_loss: report.final_loss(),
                heldout_nll: report.heldout_nll,
                train_sequences: report.train_sequences,
                heldout_sequences: report.heldout_sequences,
                elapsed_seconds: report.elapsed_seconds,
                checkpoint: args.out.clone(),
            };
            (model, summary)
        }
    };
    save_checkpoint(&model, vocab, &args.out)
        .map_err(|e| user(format!("cannot write {}: {e}", args.out.display())))?;
    let json = serde_json::to_string_pretty(&summary).map_err(internal)?;
    writeln!(out, "{json}").map_err(out_err)
}

fn generate_cmd(
    args: &GenerateArgs,
    config: &CliConfig,
    seed: u64,
    vocab: &Vocabulary,
    out: &mut dyn Write,
) -> CliResult {
    let sheet = read_sheet(&args.sheet)?;
    check_span(&sheet, args.span)?;
    let model = load_checkpoint(&args.checkpoint, vocab).map_err(|e| {
        user(format!(
            "cannot load checkpoint {}: {e}",
            args.checkpoint.display()
        ))
    })?;
    let mut policy = config.generate;
    policy.temperature = args.temperature.unwrap_or(policy.temperature);
    policy.top_p = args.top_p.unwrap_or(policy.top_p);
    let mut req =
        GenerationRequest::new(sheet.clone(), (args.span.0, args.span.1), args.capability);
    req.policy = policy;
    req.alternative_index = args.alternative;

    let suggestion = generate(
        &req,
        &model,
        &mut session_rng(seed, args.alternative),
        vocab,
    )
    .map_err(|e| match e {
        EngineError::GenerationStalled(reason) => {
            user(format!("no suggestion, try again ({reason})"))
        }
        EngineError::Token(e) => internal(e),
        other => user(other),
    })?;
    if suggestion.is_empty() {
        return Err(user(
            "no suggestion, try again (the model produced no notes in the span)",
        ));
    }
    report_suggestion(&suggestion);
    if let Some(path) = &args.suggestion {
        write_file(
            path,
            &serde_json::to_vec_pretty(&suggestion).map_err(internal)?,
        )?;
    }
    let updated = accept(&sheet, &suggestion).map_err(internal)?;
    let text = serialize_leadsheet(&updated);
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(out_err),
    }
}

fn report_suggestion(s: &Suggestion) {
    eprintln!(
        "suggestion {}: {} melody notes, {} chords, stopped at {:?}, model {}",
        s.id,
        s.generated_melody.len(),
        s.generated_harmony.len(),
        s.stop_reason,
        s.model_version
    );
}

fn serve(args: ServeArgs, config: CliConfig) -> CliResult {
    let mut service = config.service;
    service.apply_env(std::env::vars()).map_err(user)?;
    if let Some(host) = args.host {
        service.host = host;
    }
    if let Some(port) = args.port {
        service.port = port;
    }
    if let Some(path) = args.checkpoint {
        service.checkpoint = Some(path);
    }
    if let Some(dir) = args.log_dir {
        service.log_dir = dir;
    }
    if let Some(dir) = args.store_dir {
        service.store_dir = Some(dir);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
    runtime
        .block_on(cadenza_service::serve(service))
        .map_err(|e| match e {
            ServiceError::Config(_) | ServiceError::Bind { .. } => user(e),
            other => internal(other),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_parse_as_start_end_beats() {
        assert_eq!("4:12".parse::<BeatSpan>(), Ok(BeatSpan(4, 12)));
        assert!("8:4".parse::<BeatSpan>().is_err());
        assert!("4-8".parse::<BeatSpan>().is_err());
        assert!("a:8".parse::<BeatSpan>().is_err());
    }
}

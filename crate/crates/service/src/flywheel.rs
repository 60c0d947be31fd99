//! The feedback log: one JSON object per line, append-only.
//!
//! Each line carries `format_version` and a strictly increasing `seq`.
//! `served` lines create a pending record; `transition` lines move a pending
//! record to a terminal outcome. Replaying the lines in order rebuilds the
//! ledger and therefore the statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use cadenza_core::anticipate::Capability;
use serde::{Deserialize, Serialize};

pub const LOG_FORMAT_VERSION: u32 = 1;
pub const LOG_FILE_NAME: &str = "feedback.jsonl";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pending,
    Accepted,
    Ignored,
    Rejected,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Pending
    }
}

/// What moved a record out of pending.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Feedback,
    NextAlternative,
    SessionTimeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub suggestion_id: String,
    pub user_id: String,
    pub timestamp_ms: i64,
    pub capability: Capability,
    pub span_beats: (u32, u32),
    pub model_version: String,
    pub outcome: Outcome,
    pub sheet_id: String,
    pub alternative_index: u64,
    /// The generator produced no usable note.
    pub empty: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Served(SuggestionRecord),
    Transition {
        suggestion_id: String,
        outcome: Outcome,
        cause: Cause,
        timestamp_ms: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub format_version: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub entry: LogEntry,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("feedback log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("feedback log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("feedback log line {line}: format version {found} is newer than {LOG_FORMAT_VERSION}")]
    UnsupportedVersion { line: usize, found: u32 },
    #[error("feedback log line {line}: {message}")]
    Inconsistent { line: usize, message: String },
    #[error("feedback log writer has stopped")]
    WriterStopped,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub suggestions: u64,
    pub pending: u64,
    pub accepted: u64,
    pub ignored: u64,
    pub rejected: u64,
}

impl OutcomeCounts {
    fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Pending => self.pending += 1,
            Outcome::Accepted => self.accepted += 1,
            Outcome::Ignored => self.ignored += 1,
            Outcome::Rejected => self.rejected += 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlywheelStats {
    pub total_suggestions: u64,
    pub unique_users: u64,
    pub total_accepted: u64,
    pub total_ignored: u64,
    pub total_rejected: u64,
    pub total_pending: u64,
    pub empty_suggestions: u64,
    /// Keyed by capability name; every capability is present.
    pub per_capability: BTreeMap<String, OutcomeCounts>,
}

/// Records by id, rebuilt from the log.
#[derive(Clone, Debug, Default)]
pub struct Ledger {
    records: HashMap<String, SuggestionRecord>,
    last_seq: u64,
}

impl Ledger {
    pub fn record(&self, id: &str) -> Option<&SuggestionRecord> {
        self.records.get(id)
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Check that `entry` is a legal next entry.
    pub fn check(&self, entry: &LogEntry) -> Result<(), String> {
        match entry {
            LogEntry::Served(r) if self.records.contains_key(&r.suggestion_id) => {
                Err(format!("suggestion {} served twice", r.suggestion_id))
            }
            LogEntry::Served(r) if r.outcome != Outcome::Pending => Err(format!(
                "suggestion {} served with outcome {:?}",
                r.suggestion_id, r.outcome
            )),
            LogEntry::Served(_) => Ok(()),
            LogEntry::Transition {
                suggestion_id,
                outcome,
                ..
            } => match self.records.get(suggestion_id) {
                None => Err(format!("transition for unknown suggestion {suggestion_id}")),
                Some(r) if r.outcome.is_terminal() => Err(format!(
                    "suggestion {suggestion_id} is already {:?}",
                    r.outcome
                )),
                Some(_) if !outcome.is_terminal() => {
                    Err(format!("transition of {suggestion_id} to pending"))
                }
                Some(_) => Ok(()),
            },
        }
    }

    /// Apply a checked entry written at `seq`.
    pub fn apply(&mut self, seq: u64, entry: LogEntry) {
        self.last_seq = seq;
        match entry {
            LogEntry::Served(r) => {
                self.records.insert(r.suggestion_id.clone(), r);
            }
            LogEntry::Transition {
                suggestion_id,
                outcome,
                ..
            } => {
                if let Some(r) = self.records.get_mut(&suggestion_id) {
                    r.outcome = outcome;
                }
            }
        }
    }

    /// Pending records served at or before `cutoff_ms`, oldest first.
    pub fn pending_served_before(&self, cutoff_ms: i64) -> Vec<String> {
        let mut out: Vec<(&i64, &String)> = self
            .records
            .values()
            .filter(|r| r.outcome == Outcome::Pending && r.timestamp_ms <= cutoff_ms)
            .map(|r| (&r.timestamp_ms, &r.suggestion_id))
            .collect();
        out.sort();
        out.into_iter().map(|(_, id)| id.clone()).collect()
    }

    pub fn stats(&self) -> FlywheelStats {
        let mut stats = FlywheelStats {
            per_capability: Capability::ALL
                .iter()
                .map(|c| (c.name().to_string(), OutcomeCounts::default()))
                .collect(),
            ..FlywheelStats::default()
        };
        let mut users = BTreeSet::new();
        let mut totals = OutcomeCounts::default();
        for r in self.records.values() {
            users.insert(r.user_id.as_str());
            totals.suggestions += 1;
            totals.add(r.outcome);
            stats.empty_suggestions += u64::from(r.empty);
            let per = stats
                .per_capability
                .entry(r.capability.name().to_string())
                .or_default();
            per.suggestions += 1;
            per.add(r.outcome);
        }
        stats.total_suggestions = totals.suggestions;
        stats.unique_users = users.len() as u64;
        stats.total_accepted = totals.accepted;
        stats.total_ignored = totals.ignored;
        stats.total_rejected = totals.rejected;
        stats.total_pending = totals.pending;
        stats
    }
}

/// Rebuild the ledger from the log at `path`. A missing file is an empty
/// log. A final line without its newline is an unacknowledged write and is
/// ignored; `valid_len` is the byte length up to the last complete line.
pub fn replay(path: &Path) -> Result<(Ledger, u64), LogError> {
    let io_err = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Ledger::default(), 0)),
        Err(e) => return Err(io_err(e)),
    };
    let mut reader = BufReader::new(file);
    let mut ledger = Ledger::default();
    let mut valid_len = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err)?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        line_no += 1;
        valid_len += n as u64;
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| LogError::Corrupt {
                line: line_no,
                message: e.to_string(),
            })?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if version > LOG_FORMAT_VERSION {
            return Err(LogError::UnsupportedVersion {
                line: line_no,
                found: version,
            });
        }
        let line: LogLine = serde_json::from_value(value).map_err(|e| LogError::Corrupt {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.seq <= ledger.last_seq {
            return Err(LogError::Inconsistent {
                line: line_no,
                message: format!("sequence {} after {}", line.seq, ledger.last_seq),
            });
        }
        ledger
            .check(&line.entry)
            .map_err(|message| LogError::Inconsistent {
                line: line_no,
                message,
            })?;
        ledger.apply(line.seq, line.entry);
    }
    Ok((ledger, valid_len))
}

type Ack = tokio::sync::oneshot::Sender<io::Result<u64>>;

/// Appends go through one writer thread. Each append is flushed to disk
/// before it is acknowledged.
#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    tx: mpsc::Sender<(LogEntry, Ack)>,
}

impl FeedbackLog {
    /// Replay the log in `dir` and start its writer.
    pub fn open(dir: &Path) -> Result<(FeedbackLog, Ledger), LogError> {
        let path = dir.join(LOG_FILE_NAME);
        let io_err = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io_err)?;
        let (ledger, valid_len) = replay(&path)?;
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err)?;
        // drop a torn final line so the next append starts on a fresh line
        file.set_len(valid_len).map_err(io_err)?;
        file.seek(SeekFrom::End(0)).map_err(io_err)?;
        let (tx, rx) = mpsc::channel::<(LogEntry, Ack)>();
        let mut seq = ledger.last_seq();
        std::thread::Builder::new()
            .name("feedback-log".into())
            .spawn(move || {
                for (entry, ack) in rx {
                    seq += 1;
                    let result = write_line(&mut file, seq, entry).map(|()| seq);
                    if result.is_err() {
                        seq -= 1;
                    }
                    let _ = ack.send(result);
                }
            })
            .map_err(io_err)?;
        Ok((FeedbackLog { path, tx }, ledger))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append `entry`; resolves to its sequence number once durable.
    pub async fn append(&self, entry: LogEntry) -> Result<u64, LogError> {
        let (ack, done) = tokio::sync::oneshot::channel();
        self.tx
            .send((entry, ack))
            .map_err(|_| LogError::WriterStopped)?;
        match done.await {
            Ok(result) => result.map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            }),
            Err(_) => Err(LogError::WriterStopped),
        }
    }
}

fn write_line(file: &mut File, seq: u64, entry: LogEntry) -> io::Result<()> {
    let line = LogLine {
        format_version: LOG_FORMAT_VERSION,
        seq,
        entry,
    };
    let mut text = serde_json::to_string(&line).map_err(io::Error::other)?;
    text.push('\n');
    file.write_all(text.as_bytes())?;
    file.sync_data()
}

//! Versioned sheets and served suggestions, optionally mirrored to flat
//! files (one JSON document per item, replaced atomically).

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use cadenza_core::engine::{GenerationRequest, Suggestion};
use cadenza_core::leadsheet::{parse_leadsheet, serialize_leadsheet, LeadSheet};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::flywheel::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown sheet {0}")]
    NotFound(String),
    #[error("sheet {id} is at version {current}, not {expected}")]
    VersionConflict {
        id: String,
        expected: u64,
        current: u64,
    },
    #[error("store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("store {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredSheet {
    pub id: String,
    pub version: u64,
    pub sheet: LeadSheet,
}

#[derive(Serialize, Deserialize)]
struct SheetFile {
    id: String,
    version: u64,
    document: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_vec_pretty(value).map_err(|e| io_err(io::Error::other(e)))?;
    std::fs::write(&tmp, text).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn read_dir_json<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>, StoreError> {
    let io_err = |source| StoreError::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read(&p).map_err(|source| StoreError::Io {
                path: p.clone(),
                source,
            })?;
            serde_json::from_slice(&text).map_err(|e| StoreError::Corrupt {
                path: p,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct SheetStore {
    dir: Option<PathBuf>,
    inner: Mutex<SheetState>,
}

#[derive(Debug, Default)]
struct SheetState {
    sheets: HashMap<String, StoredSheet>,
    next_id: u64,
}

fn sheet_id(n: u64) -> String {
    format!("sheet-{n:06}")
}

impl SheetStore {
    pub fn in_memory() -> Self {
        SheetStore {
            dir: None,
            inner: Mutex::new(SheetState {
                next_id: 1,
                ..SheetState::default()
            }),
        }
    }

    /// Load every sheet stored under `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let mut state = SheetState {
            next_id: 1,
            ..SheetState::default()
        };
        for file in read_dir_json::<SheetFile>(dir)? {
            let path = dir.join(format!("{}.json", file.id));
            let sheet = parse_leadsheet(&file.document).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            if let Some(n) = file
                .id
                .strip_prefix("sheet-")
                .and_then(|n| n.parse::<u64>().ok())
            {
                state.next_id = state.next_id.max(n + 1);
            }
            state.sheets.insert(
                file.id.clone(),
                StoredSheet {
                    id: file.id,
                    version: file.version,
                    sheet,
                },
            );
        }
        Ok(SheetStore {
            dir: Some(dir.to_path_buf()),
            inner: Mutex::new(state),
        })
    }

    fn persist(&self, s: &StoredSheet) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let file = SheetFile {
            id: s.id.clone(),
            version: s.version,
            document: serialize_leadsheet(&s.sheet),
        };
        write_json(&dir.join(format!("{}.json", s.id)), &file)
    }

    pub fn create(&self, sheet: LeadSheet) -> Result<StoredSheet, StoreError> {
        let mut state = self.inner.lock().expect("sheet store poisoned");
        let stored = StoredSheet {
            id: sheet_id(state.next_id),
            version: 1,
            sheet,
        };
        self.persist(&stored)?;
        state.next_id += 1;
        state.sheets.insert(stored.id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn get(&self, id: &str) -> Option<StoredSheet> {
        self.inner
            .lock()
            .expect("sheet store poisoned")
            .sheets
            .get(id)
            .cloned()
    }

    /// Replace the sheet if it is still at `expected_version`.
    pub fn update(
        &self,
        id: &str,
        expected_version: u64,
        sheet: LeadSheet,
    ) -> Result<StoredSheet, StoreError> {
        let mut state = self.inner.lock().expect("sheet store poisoned");
        let current = state
            .sheets
            .get(id)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if current.version != expected_version {
            return Err(StoreError::VersionConflict {
                id: id.to_string(),
                expected: expected_version,
                current: current.version,
            });
        }
        let stored = StoredSheet {
            id: id.to_string(),
            version: expected_version + 1,
            sheet,
        };
        self.persist(&stored)?;
        state.sheets.insert(id.to_string(), stored.clone());
        Ok(stored)
    }
}

/// A served suggestion and the session it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionEntry {
    pub id: String,
    pub sheet_id: String,
    /// Sheet version the suggestion was generated against.
    pub sheet_version: u64,
    pub user_id: String,
    pub session_seed: u64,
    pub request: GenerationRequest,
    /// `None` when generation produced no usable note.
    pub suggestion: Option<Suggestion>,
    pub message: Option<String>,
    pub served_ms: i64,
    /// Whether the flywheel log holds this suggestion.
    pub logged: bool,
    pub outcome: Outcome,
}

#[derive(Debug)]
pub struct SuggestionStore {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<String, SuggestionEntry>>,
}

impl SuggestionStore {
    pub fn in_memory() -> Self {
        SuggestionStore {
            dir: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let entries = read_dir_json::<SuggestionEntry>(dir)?
            .into_iter()
            .map(|e| (e.id.clone(), e))
            .collect();
        Ok(SuggestionStore {
            dir: Some(dir.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn put(&self, entry: SuggestionEntry) -> Result<(), StoreError> {
        if let Some(dir) = &self.dir {
            write_json(&dir.join(format!("{}.json", entry.id)), &entry)?;
        }
        self.entries
            .lock()
            .expect("suggestion store poisoned")
            .insert(entry.id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<SuggestionEntry> {
        self.entries
            .lock()
            .expect("suggestion store poisoned")
            .get(id)
            .cloned()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries
            .lock()
            .expect("suggestion store poisoned")
            .contains_key(id)
    }

    /// Ids of pending entries matching `pred`.
    pub fn pending_where(&self, pred: impl Fn(&SuggestionEntry) -> bool) -> Vec<String> {
        let entries = self.entries.lock().expect("suggestion store poisoned");
        let mut ids: Vec<String> = entries
            .values()
            .filter(|e| e.outcome == Outcome::Pending && pred(e))
            .map(|e| e.id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn set_outcome(&self, id: &str, outcome: Outcome) -> Result<(), StoreError> {
        let entry = {
            let mut entries = self.entries.lock().expect("suggestion store poisoned");
            let Some(e) = entries.get_mut(id) else {
                return Ok(());
            };
            e.outcome = outcome;
            e.clone()
        };
        match &self.dir {
            Some(dir) => write_json(&dir.join(format!("{id}.json")), &entry),
            None => Ok(()),
        }
    }
}

//! Model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "CDZMODEL"
//! version      u32      CHECKPOINT_FORMAT_VERSION
//! header_len   u32
//! header       JSON     {"kind", "vocab_hash", "vocab_size", "config", "param_count"}
//! payload      kind = "tiny_transformer": param_count x f64
//!              kind = "ngram": JSON count tables
//! ```

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ngram::NGramTables;
use super::{NGramModel, SequenceModel, TinyTransformer, TinyTransformerConfig};
use crate::anticipate::Vocabulary;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CDZMODEL";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint not found: {}", path.display())]
    NotFound { path: PathBuf },
    #[error("checkpoint i/o error at {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt checkpoint (format v{format_version}): {reason}")]
    Corrupt { format_version: u32, reason: String },
    #[error("checkpoint format v{found} is not supported (this build reads v{format_version})")]
    UnsupportedVersion { found: u32, format_version: u32 },
    #[error("checkpoint (format v{format_version}) was trained for vocabulary {found}, expected {expected}")]
    VocabularyMismatch {
        format_version: u32,
        found: String,
        expected: String,
    },
}

impl CheckpointError {
    pub fn format_version(&self) -> u32 {
        CHECKPOINT_FORMAT_VERSION
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    vocab_hash: String,
    vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TinyTransformerConfig>,
    param_count: usize,
}

/// Any model that can live in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedModel {
    Transformer(TinyTransformer),
    NGram(NGramModel),
}

impl From<TinyTransformer> for LoadedModel {
    fn from(m: TinyTransformer) -> Self {
        LoadedModel::Transformer(m)
    }
}

impl From<NGramModel> for LoadedModel {
    fn from(m: NGramModel) -> Self {
        LoadedModel::NGram(m)
    }
}

impl LoadedModel {
    fn inner(&self) -> &dyn SequenceModel {
        match self {
            LoadedModel::Transformer(m) => m,
            LoadedModel::NGram(m) => m,
        }
    }
}

impl SequenceModel for LoadedModel {
    fn vocab_size(&self) -> usize {
        self.inner().vocab_size()
    }
    fn context_length(&self) -> usize {
        self.inner().context_length()
    }
    fn next_token_logits(&self, prefix: &[u32]) -> Vec<f64> {
        self.inner().next_token_logits(prefix)
    }
    fn model_version(&self) -> String {
        self.inner().model_version()
    }
    fn lookahead_width(&self) -> usize {
        self.inner().lookahead_width()
    }
    fn sequence_nll(&self, tokens: &[u32]) -> (f64, usize) {
        self.inner().sequence_nll(tokens)
    }
}

fn corrupt(reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt {
        format_version: CHECKPOINT_FORMAT_VERSION,
        reason: reason.into(),
    }
}

/// Written to a sibling temporary file and renamed into place.
pub fn save_checkpoint(
    model: &LoadedModel,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), CheckpointError> {
    let (header, payload) = match model {
        LoadedModel::Transformer(m) => {
            let mut bytes = Vec::with_capacity(m.parameter_count() * 8);
            for p in m.params() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
            let header = Header {
                kind: "tiny_transformer".into(),
                vocab_hash: vocab.hash(),
                vocab_size: m.config().vocab_size,
                config: Some(m.config().clone()),
                param_count: m.parameter_count(),
            };
            (header, bytes)
        }
        LoadedModel::NGram(m) => {
            let tables = m.to_tables();
            let header = Header {
                kind: "ngram".into(),
                vocab_hash: vocab.hash(),
                vocab_size: m.vocab_size(),
                config: None,
                param_count: tables.entries.len(),
            };
            (
                header,
                serde_json::to_vec(&tables).expect("tables serialize"),
            )
        }
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
    let write = |file: &mut std::fs::File| -> io::Result<()> {
        file.write_all(MAGIC)?;
        file.write_all(&CHECKPOINT_FORMAT_VERSION.to_le_bytes())?;
        file.write_all(&(header.len() as u32).to_le_bytes())?;
        file.write_all(&header)?;
        file.write_all(&payload)?;
        file.sync_all()
    };
    write(&mut file).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<LoadedModel, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => CheckpointError::NotFound {
            path: path.to_path_buf(),
        },
        _ => CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        },
    })?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            format_version: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.vocab_hash != vocab.hash() || header.vocab_size != vocab.size() {
        return Err(CheckpointError::VocabularyMismatch {
            format_version: CHECKPOINT_FORMAT_VERSION,
            found: header.vocab_hash,
            expected: vocab.hash(),
        });
    }
    let payload = &bytes[header_end..];
    match header.kind.as_str() {
        "tiny_transformer" => {
            let config = header
                .config
                .ok_or_else(|| corrupt("transformer header without config"))?;
            config.validate().map_err(|e| corrupt(e.to_string()))?;
            if payload.len() != header.param_count * 8 {
                return Err(corrupt(format!(
                    "expected {} parameter bytes, found {}",
                    header.param_count * 8,
                    payload.len()
                )));
            }
            let params: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let model = TinyTransformer::try_from_parts(config, params).map_err(corrupt)?;
            Ok(LoadedModel::Transformer(model))
        }
        "ngram" => {
            let tables: NGramTables = serde_json::from_slice(payload)
                .map_err(|e| corrupt(format!("bad n-gram tables: {e}")))?;
            if tables.order == 0 || tables.smoothing <= 0.0 || tables.vocab_size != vocab.size() {
                return Err(corrupt("invalid n-gram parameters"));
            }
            Ok(LoadedModel::NGram(NGramModel::from_tables(tables)))
        }
        other => Err(corrupt(format!("unknown model kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file() {
        let r = load_checkpoint(Path::new("/nonexistent/model.ckpt"), &Vocabulary::default());
        assert!(matches!(r, Err(CheckpointError::NotFound { .. })));
    }

    #[test]
    fn garbage_is_corrupt_and_names_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        let err = load_checkpoint(&path, &Vocabulary::default()).unwrap_err();
        assert!(matches!(err, CheckpointError::Corrupt { .. }));
        assert!(err.to_string().contains("v1"), "{err}");
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = NGramModel::new(2, 0.01, Vocabulary::default().size());
        m.fit(&[vec![1u32, 2, 3]]);
        save_checkpoint(&m.into(), &Vocabulary::default(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path, &Vocabulary::default()).unwrap_err();
        assert!(matches!(
            err,
            CheckpointError::UnsupportedVersion { found: 7, .. }
        ));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let model = TinyTransformer::new(
            TinyTransformerConfig {
                context_length: 8,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        save_checkpoint(&model.into(), &Vocabulary::default(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &Vocabulary::default()),
            Err(CheckpointError::Corrupt { .. })
        ));
    }
}

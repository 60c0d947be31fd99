use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "CADENZA_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {var}: {value:?}")]
    Env { var: String, value: String },
}

/// Service settings. Every field can be overridden by an environment
/// variable named `CADENZA_<FIELD>` in upper case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Model checkpoint; without one, suggestion requests answer 503.
    pub checkpoint: Option<PathBuf>,
    /// Concurrent generations.
    pub workers: usize,
    /// Directory of the feedback log.
    pub log_dir: PathBuf,
    /// Directory of stored sheets and suggestions; `None` keeps them in memory.
    pub store_dir: Option<PathBuf>,
    /// Pending suggestions older than this are recorded as ignored.
    pub session_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: None,
            workers: 2,
            log_dir: PathBuf::from("cadenza-data/log"),
            store_dir: Some(PathBuf::from("cadenza-data/store")),
            session_timeout_secs: 30 * 60,
        }
    }
}

impl ServiceConfig {
    /// Apply `CADENZA_*` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let Some(field) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let value = value.as_ref();
            let bad = || ConfigError::Env {
                var: key.as_ref().to_string(),
                value: value.to_string(),
            };
            match field {
                "HOST" => self.host = value.to_string(),
                "PORT" => self.port = value.parse().map_err(|_| bad())?,
                "CHECKPOINT" => self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value)),
                "WORKERS" => {
                    self.workers = value.parse().ok().filter(|&w| w > 0).ok_or_else(bad)?
                }
                "LOG_DIR" => self.log_dir = PathBuf::from(value),
                "STORE_DIR" => self.store_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
                "SESSION_TIMEOUT_SECS" => {
                    self.session_timeout_secs = value.parse().map_err(|_| bad())?
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// Parse a TOML document into `T`, reporting errors against `path`.
pub fn parse_toml<T: serde::de::DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_toml(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file_values() {
        let mut cfg: ServiceConfig =
            parse_toml(Path::new("x.toml"), "port = 9000\nworkers = 3\n").unwrap();
        assert_eq!((cfg.port, cfg.workers), (9000, 3));
        cfg.apply_env([
            ("CADENZA_PORT", "9100"),
            ("CADENZA_LOG_DIR", "/tmp/l"),
            ("HOME", "/root"),
        ])
        .unwrap();
        assert_eq!(cfg.port, 9100);
        assert_eq!(cfg.log_dir, PathBuf::from("/tmp/l"));
        assert_eq!(cfg.workers, 3);
    }

    #[test]
    fn bad_values_are_reported() {
        let mut cfg = ServiceConfig::default();
        assert!(matches!(
            cfg.apply_env([("CADENZA_WORKERS", "0")]),
            Err(ConfigError::Env { .. })
        ));
        assert!(parse_toml::<ServiceConfig>(Path::new("x.toml"), "prot = 1\n").is_err());
    }
}

//! Settings file shared by every command. The `[service]` table is the
//! service's own configuration, so one file drives both the pipeline and
//! `serve`.

use std::path::Path;

use cadenza_core::model::{
    SamplingPolicy, TinyTransformerConfig, TrainConfig, DEFAULT_ORDER, DEFAULT_SMOOTHING,
};
use cadenza_service::config::{read_toml, ConfigError};
use cadenza_service::ServiceConfig;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub service: ServiceConfig,
    pub dataset: DatasetSettings,
    pub train: TrainSettings,
    pub generate: SamplingPolicy,
}

impl CliConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(CliConfig::default()), read_toml)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub examples_per_song: usize,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings {
            examples_per_song: 16,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Transformer,
    Ngram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NGramSettings {
    pub order: usize,
    pub smoothing: f64,
    /// Unseen contexts fall back to their longest seen suffix.
    pub backoff: bool,
}

impl Default for NGramSettings {
    fn default() -> Self {
        NGramSettings {
            order: DEFAULT_ORDER,
            smoothing: DEFAULT_SMOOTHING,
            backoff: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub model: ModelKind,
    pub ngram: NGramSettings,
    pub transformer: TinyTransformerConfig,
    /// `seed` is replaced by the command's `--seed`.
    pub optimizer: TrainConfig,
}

#[cfg(test)]
mod tests {
    use super::*;
    use cadenza_service::config::parse_toml;

    #[test]
    fn partial_tables_keep_defaults() {
        let text = "[service]\nport = 9001\n[train]\nmodel = \"ngram\"\n[train.ngram]\norder = 4\n[generate]\ntemperature = 0.5\n";
        let cfg: CliConfig = parse_toml(Path::new("c.toml"), text).unwrap();
        assert_eq!(cfg.service.port, 9001);
        assert_eq!(cfg.service.workers, ServiceConfig::default().workers);
        assert_eq!(
            (cfg.train.model, cfg.train.ngram.order),
            (ModelKind::Ngram, 4)
        );
        assert_eq!(cfg.train.ngram.smoothing, DEFAULT_SMOOTHING);
        assert_eq!(
            cfg.generate,
            SamplingPolicy {
                temperature: 0.5,
                ..SamplingPolicy::default()
            }
        );
        assert_eq!(cfg.dataset, DatasetSettings::default());
    }

    #[test]
    fn unknown_keys_are_refused() {
        assert!(parse_toml::<CliConfig>(Path::new("c.toml"), "[train]\nstpes = 3\n").is_err());
    }
}

//! HTTP/JSON service around the generation engine.
//!
//! - `config`: settings file and `CADENZA_*` environment overrides
//! - `flywheel`: the append-only feedback log, its replay and statistics
//! - `store`: versioned sheets and served suggestions
//! - `api`: routes and handlers

pub mod api;
pub mod clock;
pub mod config;
pub mod flywheel;
pub mod store;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use cadenza_core::anticipate::Vocabulary;
use cadenza_core::model::{load_checkpoint, LoadedModel, SequenceModel};
use tokio::sync::{Mutex, Semaphore};

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use flywheel::{FlywheelStats, Outcome};

use flywheel::{FeedbackLog, Ledger, LogError};
use store::{SheetStore, StoreError, SuggestionStore};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

/// The loaded model, or why there is none.
pub type ModelSlot = Result<Arc<LoadedModel>, String>;

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    vocab: Vocabulary,
    model: ModelSlot,
    sheets: SheetStore,
    suggestions: SuggestionStore,
    log: FeedbackLog,
    /// Held while a log entry is checked, appended and applied, so the
    /// ledger always matches the file.
    ledger: Mutex<Ledger>,
    workers: Arc<Semaphore>,
}

impl AppState {
    /// State for `config`, loading the configured checkpoint. A checkpoint
    /// that fails to load leaves the service up without a model.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let vocab = Vocabulary::default();
        let model = match &config.checkpoint {
            None => Err("no checkpoint configured".to_string()),
            Some(path) => load_checkpoint(path, &vocab)
                .map(Arc::new)
                .map_err(|e| e.to_string()),
        };
        if let Err(reason) = &model {
            tracing::warn!(%reason, "serving without a model");
        }
        Self::with_model(config, clock, model)
    }

    pub fn with_model(
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        model: ModelSlot,
    ) -> Result<Self, ServiceError> {
        config.validate().map_err(ServiceError::Config)?;
        let (log, ledger) = FeedbackLog::open(&config.log_dir)?;
        let (sheets, suggestions) = match &config.store_dir {
            Some(dir) => (
                SheetStore::open(&dir.join("sheets"))?,
                SuggestionStore::open(&dir.join("suggestions"))?,
            ),
            None => (SheetStore::in_memory(), SuggestionStore::in_memory()),
        };
        // the log is authoritative for logged outcomes
        for id in suggestions.pending_where(|e| e.logged) {
            if let Some(r) = ledger.record(&id) {
                if r.outcome.is_terminal() {
                    suggestions.set_outcome(&id, r.outcome)?;
                }
            }
        }
        tracing::info!(records = ledger.len(), log = %log.path().display(), "feedback log replayed");
        let workers = Arc::new(Semaphore::new(config.workers));
        Ok(AppState {
            inner: Arc::new(Inner {
                config,
                clock,
                vocab: Vocabulary::default(),
                model,
                sheets,
                suggestions,
                log,
                ledger: Mutex::new(ledger),
                workers,
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn model_version(&self) -> Option<String> {
        self.inner.model.as_ref().ok().map(|m| m.model_version())
    }

    pub async fn stats(&self) -> FlywheelStats {
        self.inner.ledger.lock().await.stats()
    }

    pub fn log_path(&self) -> &Path {
        self.inner.log.path()
    }
}

/// Serve `config` until interrupted. Pending suggestions are swept for
/// timeouts on every request and once a minute.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = AppState::open(config, Arc::new(SystemClock))?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: addr.clone(),
            source,
        })?;
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    tracing::info!(%local, model = ?state.model_version(), "listening");
    // the bound address on stdout lets a parent process find an ephemeral port
    println!("listening on http://{local}");

    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            if let Err(e) = api::sweep_timeouts(&sweeper).await {
                tracing::error!(error = %e.message, "timeout sweep failed");
            }
        }
    });

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}

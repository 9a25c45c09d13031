//! HTTP front end: user registration, report intake, windowed detection and
//! per-region aggregates, all backed by one append-only event log.

pub mod config;
pub mod error;
pub mod ops;
mod routes;

use std::future::Future;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use floodsense_core::ledger::LedgerContext;
use floodsense_core::store::{Store, StoreError};
use floodsense_core::trust::DetectionConfig;
use floodsense_core::{QuestionnaireSchema, SchemaError};
use thiserror::Error;
use tokio::net::TcpListener;

pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;
pub use routes::{router, StatusResponse};

/// Current time in Unix seconds.
pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64)
    })
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub admin_token: Option<String>,
    pub grace_seconds: i64,
    pub tick: Duration,
    pub detection: DetectionConfig,
}

impl From<&ServiceConfig> for Settings {
    fn from(cfg: &ServiceConfig) -> Self {
        Self {
            admin_token: cfg.admin_token.clone(),
            grace_seconds: cfg.grace_seconds,
            tick: Duration::from_secs(cfg.tick_seconds),
            detection: DetectionConfig {
                iterative_detection: cfg.iterative_detection,
            },
        }
    }
}

/// Shared handler state. Every request takes the store lock for its whole
/// read-check-append sequence, so the log has a single writer.
#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    pub settings: Arc<Settings>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(store: Store, settings: Settings, clock: Clock) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
            settings: Arc::new(settings),
            clock,
        }
    }

    /// Loads the schema and opens (or creates) the configured log.
    pub fn open(cfg: &ServiceConfig, clock: Clock) -> Result<Self, StartupError> {
        let schema = match &cfg.schema_path {
            Some(p) => QuestionnaireSchema::load(p)?,
            None => QuestionnaireSchema::default_flood(),
        };
        let context = LedgerContext {
            schema,
            grid: cfg.grid,
            period: cfg.period,
        };
        let store = Store::open_or_create(&cfg.log_path, context)?;
        Ok(Self::new(store, Settings::from(cfg), clock))
    }

    pub fn now(&self) -> i64 {
        (self.clock)()
    }

    pub fn store(&self) -> MutexGuard<'_, Store> {
        // A panic never leaves a half-applied event behind: the ledger is
        // only touched after the write succeeded.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// One pass of the detection timer.
    pub fn tick(&self) -> Result<Vec<ops::DetectSummary>, ApiError> {
        let now = self.now();
        let mut store = self.store();
        ops::run_due(
            &mut store,
            now,
            self.settings.grace_seconds,
            &self.settings.detection,
        )
    }
}

/// Runs the timer until the returned handle is aborted.
pub fn spawn_timer(state: AppState) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(state.settings.tick);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            match state.tick() {
                Ok(done) if !done.is_empty() => {
                    tracing::info!(windows = done.len(), "timer evaluated windows")
                }
                Ok(_) => {}
                Err(e) => tracing::error!(error = %e.message, "timer detection failed"),
            }
        }
    })
}

/// Serves the API and the detection timer on an already bound listener.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let timer = spawn_timer(state.clone());
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    timer.abort();
    result
}

//! HTTP ingestion service in front of a [`ChannelStore`].
//!
//! Endpoints:
//!
//! * `POST /channels/{id}/write`: one sample, either a concentration or a
//!   raw low-pulse-occupancy reading converted on arrival. Rate-limited per
//!   channel.
//! * `GET /channels/{id}/feed`: time-ordered samples, optionally bucketed.
//! * `GET /channels/{id}/aqi`: class of the mean over the pollutant window.

pub mod api;
pub mod config;

use std::future::Future;
use std::sync::Arc;

use pmsense_core::aqi::{AqiError, AqiTable};
use pmsense_core::sensing::Converter;
use pmsense_core::timeseries::{ChannelStore, Clock, StoreError, SystemClock};

pub use api::router;
pub use config::ServiceConfig;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Aqi(#[from] AqiError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ChannelStore>,
    pub clock: Arc<dyn Clock>,
    pub converter: Converter,
    pub table: Arc<AqiTable>,
}

impl AppState {
    pub fn new(store: Arc<ChannelStore>, clock: Arc<dyn Clock>) -> Self {
        AppState {
            store,
            clock,
            converter: Converter::default(),
            table: Arc::new(AqiTable::default()),
        }
    }

    /// Opens (or creates) the store described by `config` and registers its
    /// channels.
    pub fn from_config(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let store = match &config.data_dir {
            Some(dir) => ChannelStore::open_with(dir, config.snapshot_every.max(1))?,
            None => ChannelStore::in_memory(),
        };
        for channel in config.effective_channels()? {
            store.ensure_channel(channel)?;
        }
        let table = match &config.aqi_table {
            Some(path) => AqiTable::load(path)?,
            None => AqiTable::default(),
        };
        Ok(AppState {
            store: Arc::new(store),
            clock,
            converter: Converter::new(config.particle_model),
            table: Arc::new(table),
        })
    }
}

/// Serves `state` on `listener` until `shutdown` resolves, then checkpoints
/// the store.
pub async fn serve_state(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    tracing::info!(addr = %listener.local_addr()?, channels = state.store.channel_ids().len(), "listening");
    let store = state.store.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    store.checkpoint()?;
    tracing::info!("store checkpointed");
    Ok(())
}

/// Serves until `shutdown` resolves, then checkpoints the store.
pub async fn serve_with_shutdown(
    config: &ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let state = AppState::from_config(config, Arc::new(SystemClock))?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    serve_state(listener, state, shutdown).await
}

/// Serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServiceError> {
    serve_with_shutdown(config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

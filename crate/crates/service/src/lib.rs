//! HTTP API for the LUT viewer.
//!
//! Sessions hold an uploaded source image, a model and per-component scales.
//! All pixel payloads are PNG; metadata is JSON. Image uploads inside JSON
//! bodies are base64 strings of PNG or binary PPM files.

mod api;
mod config;
mod error;
mod session;

pub use api::router;
pub use config::ServiceConfig;
pub use error::ApiError;
pub use session::{AppState, SCALE_LIMIT};

use std::net::SocketAddr;

use tokio::net::TcpListener;

/// Serves `state` on an already bound listener until the task is cancelled.
/// Expired sessions are swept once a minute.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(std::time::Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.evict_expired();
        }
    });
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and returns the listener with its resolved local address.
pub async fn bind(addr: SocketAddr) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}

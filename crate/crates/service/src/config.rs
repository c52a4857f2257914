use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    /// Idle time after which a session is dropped.
    pub session_ttl: Duration,
    /// Upper bound on optimizer steps for one fit request.
    pub max_fit_steps: usize,
    /// Request body limit in bytes; larger bodies get 413.
    pub max_body_bytes: usize,
    /// Grid size of the identity model given to sessions created without one.
    pub default_grid: usize,
    /// Allowed CORS origin; `None` allows any origin.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: 16,
            session_ttl: Duration::from_secs(30 * 60),
            max_fit_steps: 500,
            max_body_bytes: 32 << 20,
            default_grid: 33,
            cors_origin: None,
        }
    }
}

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use lorlut_core::io::{write_image, ImageFormat};
use lorlut_core::{apply_to_image, compose_lut, ComponentScales, ImageBuffer, InterpKind, LorLutModel, Lut3D};

use crate::config::ServiceConfig;
use crate::error::ApiError;

/// Component scales are accepted in `[-SCALE_LIMIT, SCALE_LIMIT]`.
pub const SCALE_LIMIT: f64 = 4.0;

pub(crate) struct Edit {
    pub model: LorLutModel,
    pub model_hash: u64,
    pub scales: ComponentScales,
}

impl Edit {
    pub fn new(model: LorLutModel) -> Self {
        Self {
            model_hash: model_hash(&model),
            scales: ComponentScales::ones(model.rank()),
            model,
        }
    }

    pub fn lut(&self) -> Result<Lut3D, ApiError> {
        Ok(compose_lut(&self.model, &self.scales)?)
    }
}

type PreviewKey = (u64, Vec<u64>);

pub(crate) struct Session {
    pub source: ImageBuffer,
    pub edit: RwLock<Edit>,
    preview: Mutex<Option<(PreviewKey, Arc<Vec<u8>>)>>,
    last_access: Mutex<Instant>,
    fitting: AtomicBool,
}

/// Clears the in-flight fit flag when dropped.
pub(crate) struct FitGuard(Arc<Session>);

impl Drop for FitGuard {
    fn drop(&mut self) {
        self.0.fitting.store(false, Ordering::Release);
    }
}

impl Session {
    /// PNG of the source under the current model and scales. Rendering holds
    /// the read lock, so a concurrent model swap cannot be observed halfway.
    pub fn preview_png(&self) -> Result<Arc<Vec<u8>>, ApiError> {
        let edit = self.edit.read().expect("session lock poisoned");
        let key = (edit.model_hash, edit.scales.as_slice().iter().map(|s| s.to_bits()).collect());
        if let Some((cached, bytes)) = &*self.preview.lock().expect("cache lock poisoned") {
            if *cached == key {
                return Ok(bytes.clone());
            }
        }
        let out = apply_to_image(&edit.lut()?, &self.source, InterpKind::Trilinear, true);
        let bytes = Arc::new(write_image(&out, ImageFormat::Png)?);
        *self.preview.lock().expect("cache lock poisoned") = Some((key, bytes.clone()));
        Ok(bytes)
    }

    pub fn try_start_fit(self: &Arc<Self>) -> Option<FitGuard> {
        self.fitting
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| FitGuard(self.clone()))
    }
}

fn model_hash(m: &LorLutModel) -> u64 {
    let mut h = DefaultHasher::new();
    m.grid_size.hash(&mut h);
    m.alphas.iter().for_each(|a| a.to_bits().hash(&mut h));
    for b in &m.bases {
        b.entries().iter().for_each(|e| e.to_array().map(f64::to_bits).hash(&mut h));
    }
    for c in m.factors.components() {
        for v in [&c.u, &c.v, &c.w] {
            v.iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        c.c.map(f64::to_bits).hash(&mut h);
    }
    h.finish()
}

struct Inner {
    config: ServiceConfig,
    default_model: LorLutModel,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
}

/// Shared server state: configuration plus the in-memory session table.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// `default_model` seeds sessions created without a model; when absent
    /// they start from the identity at the configured grid size.
    pub fn new(config: ServiceConfig, default_model: Option<LorLutModel>) -> lorlut_core::Result<Self> {
        let default_model = match default_model {
            Some(m) => m,
            None => LorLutModel::identity(config.default_grid)?,
        };
        Ok(Self(Arc::new(Inner {
            config,
            default_model,
            sessions: Mutex::new(HashMap::new()),
        })))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub fn default_model(&self) -> &LorLutModel {
        &self.0.default_model
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.lock().expect("session table poisoned").len()
    }

    /// Drops sessions idle for longer than the TTL.
    pub fn evict_expired(&self) {
        let ttl = self.0.config.session_ttl;
        let mut table = self.0.sessions.lock().expect("session table poisoned");
        table.retain(|_, s| s.last_access.lock().expect("access lock poisoned").elapsed() <= ttl);
    }

    pub(crate) fn create(&self, source: ImageBuffer, model: LorLutModel) -> Result<(String, Arc<Session>), ApiError> {
        self.evict_expired();
        let mut table = self.0.sessions.lock().expect("session table poisoned");
        if table.len() >= self.0.config.max_sessions {
            return Err(ApiError::new(
                axum::http::StatusCode::TOO_MANY_REQUESTS,
                format!("session limit of {} reached", self.0.config.max_sessions),
            ));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Arc::new(Session {
            source,
            edit: RwLock::new(Edit::new(model)),
            preview: Mutex::new(None),
            last_access: Mutex::new(Instant::now()),
            fitting: AtomicBool::new(false),
        });
        table.insert(id.clone(), session.clone());
        Ok((id, session))
    }

    /// Looks up a live session and refreshes its idle timer.
    pub(crate) fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let mut table = self.0.sessions.lock().expect("session table poisoned");
        let session = table.get(id).cloned().ok_or_else(ApiError::not_found)?;
        let mut last = session.last_access.lock().expect("access lock poisoned");
        if last.elapsed() > self.0.config.session_ttl {
            drop(last);
            table.remove(id);
            return Err(ApiError::not_found());
        }
        *last = Instant::now();
        drop(last);
        Ok(session)
    }
}

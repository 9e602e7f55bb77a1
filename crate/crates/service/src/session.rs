//! Per-session state: the assembled model, the current handle partition
//! with its harmonic weights, and the factorization cache.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::http::StatusCode;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use harmonica_core::metrics;
use harmonica_core::solver::CacheKey;
use harmonica_core::{operators, ContextCache, HandleRegion, HandleSet, HarmonicWeights, Model, Partition, Transform};

use crate::api::{
    ApiError, BoundingBox, DeformRequest, DeformResponse, HandleDef, HandlesAccepted, Precision, SessionInfo, Timings,
    WeightsResponse,
};

/// A handle partition together with everything derived from it. Replaced
/// wholesale when the handles change, which also drops its contexts.
pub struct HandleState {
    pub partition: Partition,
    pub weights: HarmonicWeights,
    pub cache: ContextCache,
}

pub struct Session {
    pub id: String,
    model: Model,
    handles: RwLock<Option<Arc<HandleState>>>,
    /// Serializes handle updates.
    update: Mutex<()>,
    factorizations: AtomicU64,
    deforms: AtomicU64,
    last_used: Mutex<Instant>,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl Session {
    pub fn new(id: String, model: Model) -> Self {
        Session {
            id,
            model,
            handles: RwLock::new(None),
            update: Mutex::new(()),
            factorizations: AtomicU64::new(0),
            deforms: AtomicU64::new(0),
            last_used: Mutex::new(Instant::now()),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn touch(&self) {
        *self.last_used.lock().unwrap_or_else(|e| e.into_inner()) = Instant::now();
    }

    pub fn last_used(&self) -> Instant {
        *self.last_used.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn bbox(&self) -> BoundingBox {
        let b = self.model.mesh().bbox();
        BoundingBox {
            min: b.min.into(),
            max: b.max.into(),
            diagonal: b.diagonal(),
        }
    }

    pub fn current_handles(&self) -> Option<Arc<HandleState>> {
        self.handles.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn info(&self) -> SessionInfo {
        let handles = self.current_handles();
        SessionInfo {
            id: self.id.clone(),
            num_vertices: self.model.mesh().num_vertices(),
            num_triangles: self.model.mesh().num_triangles(),
            handles: handles
                .as_ref()
                .map(|h| h.partition.regions().iter().map(|r| r.name.clone()).collect())
                .unwrap_or_default(),
            factorizations: self.factorizations.load(Ordering::Relaxed),
            deforms: self.deforms.load(Ordering::Relaxed),
            cached_contexts: handles.map(|h| h.cache.len()).unwrap_or(0),
        }
    }

    /// Validates and installs a new partition, recomputing harmonic weights.
    /// Any cached factorization is discarded.
    pub fn set_handles(&self, defs: Vec<HandleDef>) -> Result<HandlesAccepted, ApiError> {
        let _guard = self.update.lock().unwrap_or_else(|e| e.into_inner());
        let regions: Vec<HandleRegion> = defs.into_iter().map(|d| HandleRegion::new(d.name, d.vertices)).collect();
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = regions.iter().find(|r| !names.insert(r.name.as_str())) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("duplicate handle name {:?}", dup.name),
            ));
        }
        let partition = self.model.partition(regions)?;
        partition.check_components(self.model.mesh())?;
        let weights = self.model.harmonic_weights(&partition)?;
        let accepted = HandlesAccepted {
            handles: partition.regions().iter().map(|r| r.name.clone()).collect(),
            constrained: partition.constrained().len(),
            free: partition.free().len(),
        };
        let state = HandleState {
            partition,
            weights,
            cache: ContextCache::new(),
        };
        *self.handles.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(state));
        Ok(accepted)
    }

    pub fn weights(&self) -> Result<WeightsResponse, ApiError> {
        let state = self.require_handles()?;
        let n = self.model.mesh().num_vertices();
        Ok(WeightsResponse {
            handles: state.partition.regions().iter().map(|r| r.name.clone()).collect(),
            rows: (0..n).map(|v| state.weights.vertex(v).to_vec()).collect(),
        })
    }

    fn require_handles(&self) -> Result<Arc<HandleState>, ApiError> {
        self.current_handles()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no handles defined for this session"))
    }

    pub fn deform(&self, request: DeformRequest) -> Result<DeformResponse, ApiError> {
        let started = Instant::now();
        let state = self.require_handles()?;
        operators::check_beta(request.beta)?;
        let regions = state.partition.regions();
        if let Some(unknown) = request.transforms.keys().find(|k| state.partition.index_of(k).is_none()) {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown handle {unknown:?}")));
        }
        let transforms = regions
            .iter()
            .map(|r| match request.transforms.get(&r.name) {
                Some(spec) => spec.to_transform(),
                None => Ok(Transform::identity()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let handles = HandleSet::new(self.model.mesh(), state.partition.clone(), transforms)?;

        let factorize_started = Instant::now();
        let key = CacheKey::new(&state.partition, request.beta, request.operator);
        let (ctx, cache_hit) = state.cache.get_or_factorize(key, || {
            self.model.factorize(&state.partition, request.beta, request.operator)
        })?;
        if !cache_hit {
            self.factorizations.fetch_add(1, Ordering::Relaxed);
        }
        let factorize_ms = millis(factorize_started);

        let guidance_started = Instant::now();
        let guidance = self.model.guidance(&state.weights, &handles)?;
        let guidance_ms = millis(guidance_started);
        let out = self.model.solve_with(&ctx, &handles, guidance)?;
        let report = metrics::report(&self.model, &out);
        self.deforms.fetch_add(1, Ordering::Relaxed);

        Ok(DeformResponse {
            positions: encode_positions(&out.positions, request.precision),
            precision: request.precision,
            num_vertices: out.positions.len(),
            energy: report.energy.values,
            colors: BASE64.encode(report.colormap.colors.concat()),
            p95: report.colormap.p95,
            max_iso: report.distortion.max_iso,
            max_conf: report.distortion.max_conf,
            energies: out.energies,
            residual: out.residual,
            timings: Timings {
                factorize_ms,
                guidance_ms,
                solve_ms: out.solve_time.as_secs_f64() * 1e3,
                total_ms: millis(started),
            },
            cache_hit,
        })
    }
}

pub fn encode_positions(positions: &[harmonica_core::Vector3<f64>], precision: Precision) -> String {
    let mut bytes = Vec::with_capacity(positions.len() * 3 * 8);
    for p in positions {
        for c in [p.x, p.y, p.z] {
            match precision {
                Precision::F32 => bytes.extend_from_slice(&(c as f32).to_le_bytes()),
                Precision::F64 => bytes.extend_from_slice(&c.to_le_bytes()),
            }
        }
    }
    BASE64.encode(bytes)
}

/// Live sessions keyed by id.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionStore {
    pub fn insert(&self, session: Session) -> Arc<Session> {
        let session = Arc::new(session);
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.id.clone(), session.clone());
        session
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let session = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))?;
        session.touch();
        Ok(session)
    }

    pub fn remove(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(id)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than `timeout` as of `now`; returns
    /// how many were removed.
    pub fn evict_idle(&self, now: Instant, timeout: std::time::Duration) -> usize {
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let before = sessions.len();
        sessions.retain(|_, s| now.saturating_duration_since(s.last_used()) <= timeout);
        before - sessions.len()
    }
}

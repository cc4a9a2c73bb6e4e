//! Service state shared by the HTTP handlers.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use manic_core::contentment::{train_preferences, PreferenceConfig, PreferenceReport};
use manic_core::planner::{GaParams, PlanPool};
use manic_core::{ActionSpace, BeliefVector, ContentmentModel, LearningSystem};
use serde::{Deserialize, Serialize};

use crate::candidates::generate_candidates;
use crate::error::{Error, Result};
use crate::store::{CandidateSummary, Store};

/// Atomically replaceable snapshot of the contentment model. Holders of an
/// old snapshot keep using it until they fetch a new one.
#[derive(Clone)]
pub struct ContentmentHandle {
    slot: Arc<RwLock<Arc<ContentmentModel>>>,
    version: Arc<AtomicU64>,
}

impl ContentmentHandle {
    pub fn new(cm: ContentmentModel) -> Self {
        Self {
            slot: Arc::new(RwLock::new(Arc::new(cm))),
            version: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn snapshot(&self) -> Arc<ContentmentModel> {
        self.slot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, cm: ContentmentModel) {
        *self.slot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(cm);
        self.version.fetch_add(1, Ordering::Release);
    }

    /// Bumped by every [`replace`](Self::replace); cheap to poll.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }
}

/// What a running agent publishes about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub agent_mode: String,
    pub steps_taken: usize,
    /// Current belief; candidates start here. Zeros when absent.
    pub belief: Option<BeliefVector>,
}

impl Default for AgentStatus {
    fn default() -> Self {
        Self {
            agent_mode: "idle".into(),
            steps_taken: 0,
            belief: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHashes {
    pub f: String,
    pub g: String,
    pub g_plus: Option<String>,
    pub h: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub agent_mode: String,
    pub steps_taken: usize,
    pub pending_candidates: usize,
    pub model_hashes: ModelHashes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    #[serde(flatten)]
    pub report: PreferenceReport,
    pub model_hashes: ModelHashes,
}

/// Planner settings used to build the pool candidates are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub pool_size: usize,
    pub horizon: usize,
    pub refine_iterations: usize,
    pub ga: GaParams,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            pool_size: 64,
            horizon: 10,
            refine_iterations: 10,
            ga: GaParams::default(),
        }
    }
}

pub struct TeacherService {
    store: Store,
    ls: Arc<LearningSystem>,
    space: ActionSpace,
    contentment: ContentmentHandle,
    status: RwLock<AgentStatus>,
    preference: PreferenceConfig,
    generate: GenerateConfig,
    persist: Option<PathBuf>,
}

impl TeacherService {
    pub fn new(
        store: Store,
        ls: Arc<LearningSystem>,
        space: ActionSpace,
        contentment: ContentmentHandle,
        preference: PreferenceConfig,
        generate: GenerateConfig,
    ) -> Result<Self> {
        let d = ls.belief_dims();
        if contentment.snapshot().belief_dims() != d {
            return Err(Error::BadRequest(format!(
                "contentment model expects {} belief dims, learning system has {d}",
                contentment.snapshot().belief_dims()
            )));
        }
        if space.dims() != ls.action_dims() {
            return Err(Error::BadRequest(format!(
                "action space has {} dims, learning system expects {}",
                space.dims(),
                ls.action_dims()
            )));
        }
        Ok(Self {
            store,
            ls,
            space,
            contentment,
            status: RwLock::new(AgentStatus::default()),
            preference,
            generate,
            persist: None,
        })
    }

    /// Saves every retrained `h` to `path` before it is swapped in.
    pub fn persist_contentment_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.persist = Some(path.into());
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn learning_system(&self) -> &LearningSystem {
        &self.ls
    }

    pub fn contentment(&self) -> &ContentmentHandle {
        &self.contentment
    }

    pub fn set_status(&self, status: AgentStatus) {
        *self.status.write().unwrap_or_else(|e| e.into_inner()) = status;
    }

    pub fn agent_status(&self) -> AgentStatus {
        self.status.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn model_hashes(&self) -> ModelHashes {
        ModelHashes {
            f: self.ls.f.hash(),
            g: self.ls.g.hash(),
            g_plus: self.ls.g_plus.as_ref().map(|e| e.hash()),
            h: self.contentment.snapshot().hash(),
        }
    }

    pub fn status(&self) -> StatusReport {
        let agent = self.agent_status();
        StatusReport {
            agent_mode: agent.agent_mode,
            steps_taken: agent.steps_taken,
            pending_candidates: self.store.pending_count(),
            model_hashes: self.model_hashes(),
        }
    }

    /// Plans from the agent's current belief against the current `h` and
    /// stores `n` new candidates.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<CandidateSummary>> {
        let cfg = &self.generate;
        let v0 = self
            .agent_status()
            .belief
            .unwrap_or_else(|| BeliefVector::zeros(self.ls.belief_dims()));
        let cm = self.contentment.snapshot();
        let mut pool = PlanPool::with_params(cfg.pool_size, cfg.horizon, &self.space, cfg.ga.clone(), seed)?;
        pool.evaluate(&self.ls, &cm, &v0)?;
        pool.refine(&self.ls, &cm, &v0, cfg.refine_iterations)?;
        let candidates = generate_candidates(&pool, &self.ls, &v0, n, seed, &self.store.ids())?;
        self.store.insert(&candidates)?;
        let wanted: Vec<&str> = candidates.iter().map(|c| c.bundle.id.as_str()).collect();
        Ok(self
            .store
            .list()
            .into_iter()
            .filter(|c| wanted.contains(&c.id.as_str()))
            .collect())
    }

    /// Trains a copy of the current `h` on every stored ranking, then swaps
    /// it in. The learning system is never modified.
    pub fn retrain(&self) -> Result<RetrainReport> {
        let _w = self.store.write_lock();
        let records = self.store.records();
        if records.iter().all(|r| r.pairs.is_empty()) {
            return Err(Error::EmptyStore);
        }
        let mut cm = (*self.contentment.snapshot()).clone();
        let report = train_preferences(&mut cm, &records, &self.store, &self.ls, &self.preference)?;
        if let Some(path) = &self.persist {
            let tmp = path.with_extension("partial");
            cm.h.save(&tmp)?;
            std::fs::rename(&tmp, path)?;
        }
        self.contentment.replace(cm);
        Ok(RetrainReport {
            report,
            model_hashes: self.model_hashes(),
        })
    }
}

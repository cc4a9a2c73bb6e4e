//! On-disk candidate and preference store.
//!
//! Layout under the store directory:
//! `preferences.jsonl` holds one ranking per line and is only ever appended;
//! `candidates/<id>/bundle.json` plus `candidates/<id>/<k>.png` hold each
//! candidate. Whether a candidate is still pending is derived from the log,
//! so reopening a directory rebuilds the same state.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, RwLock};

use manic_core::contentment::{validate_ordering, PreferenceRecord, TraceSource};
use manic_core::env::observation_to_png;
use manic_core::{BeliefVector, LearningSystem};
use serde::{Deserialize, Serialize};

use crate::candidates::{now_ms, Candidate, CandidateBundle};
use crate::error::{Error, Result};

const LOG_FILE: &str = "preferences.jsonl";
const CANDIDATE_DIR: &str = "candidates";
const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    Pending,
    Ranked,
}

/// One row of the candidate listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: String,
    pub horizon: usize,
    pub frame_count: usize,
    pub created_at: u64,
    pub status: CandidateStatus,
}

#[derive(Default)]
struct Index {
    bundles: BTreeMap<String, CandidateBundle>,
    ranked: HashSet<String>,
    records: Vec<PreferenceRecord>,
}

impl Index {
    fn status(&self, id: &str) -> CandidateStatus {
        if self.ranked.contains(id) {
            CandidateStatus::Ranked
        } else {
            CandidateStatus::Pending
        }
    }
}

/// Readers take the index lock briefly; every mutation also holds the
/// writer lock for its whole duration, so writes apply one at a time.
pub struct Store {
    dir: PathBuf,
    index: RwLock<Index>,
    writer: Mutex<()>,
}

impl Store {
    /// Opens or creates a store, replaying the preference log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let cand_dir = dir.join(CANDIDATE_DIR);
        fs::create_dir_all(&cand_dir)?;
        let mut index = Index::default();
        for entry in fs::read_dir(&cand_dir)? {
            let path = entry?.path().join(BUNDLE_FILE);
            // bundle.json is written last; a directory without it is an
            // interrupted insert and is ignored
            if !path.is_file() {
                continue;
            }
            let bundle: CandidateBundle = serde_json::from_str(&fs::read_to_string(&path)?)?;
            if !bundle.verify_id() {
                return Err(format_error(format!("{} does not match its content hash", path.display())));
            }
            index.bundles.insert(bundle.id.clone(), bundle);
        }
        let log = dir.join(LOG_FILE);
        if log.exists() {
            for (n, line) in BufReader::new(fs::File::open(&log)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: PreferenceRecord = serde_json::from_str(&line)?;
                record.validate()?;
                for id in &record.ordering {
                    if !index.bundles.contains_key(id) {
                        return Err(format_error(format!("{LOG_FILE} line {}: unknown candidate {id}", n + 1)));
                    }
                    index.ranked.insert(id.clone());
                }
                index.records.push(record);
            }
        }
        Ok(Self {
            dir,
            index: RwLock::new(index),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Index> {
        self.index.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Serializes with every other write. Held by retraining so the set of
    /// records cannot change underneath it.
    pub fn write_lock(&self) -> MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// All candidates, oldest first.
    pub fn list(&self) -> Vec<CandidateSummary> {
        let index = self.read();
        let mut rows: Vec<CandidateSummary> = index
            .bundles
            .values()
            .map(|b| CandidateSummary {
                id: b.id.clone(),
                horizon: b.horizon,
                frame_count: b.frame_count,
                created_at: b.created_at,
                status: index.status(&b.id),
            })
            .collect();
        rows.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        rows
    }

    pub fn bundle(&self, id: &str) -> Option<CandidateBundle> {
        self.read().bundles.get(id).cloned()
    }

    pub fn status(&self, id: &str) -> Option<CandidateStatus> {
        let index = self.read();
        index.bundles.contains_key(id).then(|| index.status(id))
    }

    pub fn ids(&self) -> HashSet<String> {
        self.read().bundles.keys().cloned().collect()
    }

    pub fn pending_count(&self) -> usize {
        let index = self.read();
        index.bundles.len() - index.ranked.len()
    }

    pub fn records(&self) -> Vec<PreferenceRecord> {
        self.read().records.clone()
    }

    pub fn pair_count(&self) -> usize {
        self.read().records.iter().map(|r| r.pairs.len()).sum()
    }

    /// Writes candidates that are not stored yet and returns the ids of the
    /// new ones. Existing ids are left untouched.
    pub fn insert(&self, candidates: &[Candidate]) -> Result<Vec<String>> {
        let _w = self.write_lock();
        let mut added = Vec::new();
        for c in candidates {
            let b = &c.bundle;
            if !b.verify_id() {
                return Err(Error::BadRequest(format!("candidate {} does not match its content hash", b.id)));
            }
            if b.frame_count != c.frames.len() || b.horizon != b.plan.len() {
                return Err(Error::BadRequest(format!("candidate {} has inconsistent lengths", b.id)));
            }
            if self.read().bundles.contains_key(&b.id) {
                continue;
            }
            let dir = self.dir.join(CANDIDATE_DIR).join(&b.id);
            fs::create_dir_all(&dir)?;
            for (k, frame) in c.frames.iter().enumerate() {
                fs::write(dir.join(frame_name(k)), observation_to_png(frame)?)?;
            }
            let tmp = dir.join("bundle.json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(b)?)?;
            fs::rename(&tmp, dir.join(BUNDLE_FILE))?;
            self.write().bundles.insert(b.id.clone(), b.clone());
            added.push(b.id.clone());
        }
        Ok(added)
    }

    /// PNG bytes of frame `k` (zero-based) of a candidate.
    pub fn frame_png(&self, id: &str, k: usize) -> Result<Vec<u8>> {
        let count = self
            .read()
            .bundles
            .get(id)
            .map(|b| b.frame_count)
            .ok_or_else(|| Error::UnknownCandidate(id.to_string()))?;
        if k >= count {
            return Err(Error::NoSuchFrame { id: id.to_string(), frame: k });
        }
        Ok(fs::read(self.dir.join(CANDIDATE_DIR).join(id).join(frame_name(k)))?)
    }

    /// Records a best-first ordering of pending candidates.
    pub fn ingest_ranking(&self, session_id: &str, ordering: Vec<String>) -> Result<PreferenceRecord> {
        if session_id.is_empty() {
            return Err(Error::BadRequest("session_id must not be empty".into()));
        }
        validate_ordering(&ordering).map_err(|e| Error::BadRequest(e.to_string()))?;
        let _w = self.write_lock();
        {
            let index = self.read();
            for id in &ordering {
                if !index.bundles.contains_key(id) {
                    return Err(Error::UnknownCandidate(id.clone()));
                }
                if index.ranked.contains(id) {
                    return Err(Error::NotPending(id.clone()));
                }
            }
        }
        let record = PreferenceRecord::new(session_id, now_ms(), ordering)?;
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let mut log = OpenOptions::new().create(true).append(true).open(self.dir.join(LOG_FILE))?;
        log.write_all(&line)?;
        log.sync_data()?;
        let mut index = self.write();
        index.ranked.extend(record.ordering.iter().cloned());
        index.records.push(record.clone());
        Ok(record)
    }
}

impl TraceSource for Store {
    fn trace(&self, id: &str, ls: &LearningSystem) -> manic_core::Result<Vec<BeliefVector>> {
        let bundle = self
            .bundle(id)
            .ok_or_else(|| manic_core::Error::UnresolvedTrace(id.to_string()))?;
        ls.rollout(&bundle.v0, &bundle.plan.actions)
    }
}

fn frame_name(k: usize) -> String {
    format!("{k:04}.png")
}

fn format_error(msg: String) -> Error {
    Error::Core(manic_core::Error::Format(msg))
}

//! Candidate plans offered to the teacher as imagined videos.

use std::collections::HashSet;
use std::time::{SystemTime, UNIX_EPOCH};

use manic_core::planner::{Plan, PlanPool};
use manic_core::{BeliefVector, LearningSystem, Observation};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Persisted description of one candidate. Frames live beside it as PNGs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBundle {
    pub id: String,
    pub plan: Plan,
    pub v0: BeliefVector,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub horizon: usize,
    pub frame_count: usize,
}

impl CandidateBundle {
    pub fn new(plan: Plan, v0: BeliefVector, created_at: u64) -> Result<Self> {
        let id = candidate_id(&plan, &v0)?;
        let horizon = plan.len();
        Ok(Self {
            id,
            plan,
            v0,
            created_at,
            horizon,
            frame_count: horizon,
        })
    }

    /// True when the stored id matches the hash of the stored plan and start.
    pub fn verify_id(&self) -> bool {
        candidate_id(&self.plan, &self.v0).is_ok_and(|id| id == self.id)
    }
}

/// A bundle together with its imagined video.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub bundle: CandidateBundle,
    pub frames: Vec<Observation>,
}

#[derive(Serialize)]
struct IdKey<'a> {
    plan: &'a Plan,
    v0: &'a BeliefVector,
}

/// Hex sha256 of the JSON encoding of `{plan, v0}`.
pub fn candidate_id(plan: &Plan, v0: &BeliefVector) -> Result<String> {
    let bytes = serde_json::to_vec(&IdKey { plan, v0 })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Greedy max-min Hamming selection. `candidates[0]` is always taken first;
/// each later pick maximizes its distance to the closest plan already chosen.
/// Ties go to the earlier entry of a seeded shuffle of the rest.
pub fn select_diverse(plans: &[Plan], candidates: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let Some((&first, rest)) = candidates.split_first() else {
        return Vec::new();
    };
    let mut remaining = rest.to_vec();
    remaining.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = vec![first];
    let mut nearest: Vec<usize> = remaining.iter().map(|&i| plans[i].hamming(&plans[first])).collect();
    while chosen.len() < n && !remaining.is_empty() {
        let mut best = 0;
        for j in 1..remaining.len() {
            if nearest[j] > nearest[best] {
                best = j;
            }
        }
        let pick = remaining.remove(best);
        nearest.remove(best);
        for (j, &i) in remaining.iter().enumerate() {
            nearest[j] = nearest[j].min(plans[i].hamming(&plans[pick]));
        }
        chosen.push(pick);
    }
    chosen
}

/// Picks the best-scoring plan of an evaluated pool plus `n - 1` plans chosen
/// for diversity, and renders each from `v0`. Plans whose id is in `exclude`
/// or that duplicate an earlier plan are skipped.
pub fn generate_candidates(
    pool: &PlanPool,
    ls: &LearningSystem,
    v0: &BeliefVector,
    n: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<Vec<Candidate>> {
    if n < 2 {
        return Err(Error::BadRequest(format!("ranking needs at least 2 candidates, asked for {n}")));
    }
    let scores = pool.scores()?;
    let plans = pool.plans();
    let mut seen = HashSet::new();
    let mut ids = Vec::with_capacity(plans.len());
    let mut eligible = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        let id = candidate_id(plan, v0)?;
        if !exclude.contains(&id) && seen.insert(id.clone()) {
            eligible.push(i);
        }
        ids.push(id);
    }
    if eligible.len() < n {
        return Err(Error::BadRequest(format!(
            "pool holds only {} new distinct plans, asked for {n}",
            eligible.len()
        )));
    }
    // stable sort keeps the lower index first among equal scores
    eligible.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let created_at = now_ms();
    select_diverse(plans, &eligible, n, seed)
        .into_iter()
        .map(|i| {
            let plan = plans[i].clone();
            let frames = ls.imagine_video(v0, &plan.actions)?;
            let horizon = plan.len();
            Ok(Candidate {
                bundle: CandidateBundle {
                    id: ids[i].clone(),
                    plan,
                    v0: v0.clone(),
                    created_at,
                    horizon,
                    frame_count: frames.len(),
                },
                frames,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use manic_core::ActionVector;

    fn plan(actions: &[usize]) -> Plan {
        Plan {
            actions: actions.iter().map(|&a| ActionVector::one_hot(3, a)).collect(),
        }
    }

    #[test]
    fn id_is_stable_across_reserialization() {
        let b = CandidateBundle::new(plan(&[0, 1, 2]), BeliefVector::new(vec![0.1, -0.3]).unwrap(), 5).unwrap();
        let back: CandidateBundle = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(back.verify_id());
        let other = candidate_id(&plan(&[0, 1, 1]), &b.v0).unwrap();
        assert_ne!(other, b.id);
    }

    #[test]
    fn selection_starts_with_first_and_spreads_out() {
        let plans = vec![plan(&[0, 0, 0]), plan(&[0, 0, 1]), plan(&[2, 2, 2]), plan(&[0, 1, 0])];
        let picked = select_diverse(&plans, &[0, 1, 2, 3], 2, 9);
        assert_eq!(picked, vec![0, 2]);
        assert_eq!(select_diverse(&plans, &[1, 0], 5, 0), vec![1, 0]);
        assert!(select_diverse(&plans, &[], 3, 0).is_empty());
    }
}

//! Closed-loop fitness for evolving contentment models.

use std::sync::Arc;

use super::{run_episode, AgentConfig, ManicAgent};
use crate::contentment::{ContentmentModel, FitnessScorer};
use crate::env::Environment;
use crate::error::Result;
use crate::learning::LearningSystem;

type Objective = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Runs one episode per seed with the candidate `h` and averages an external
/// per-state objective over every visited state. The learning system is
/// shared, read-only, by all candidates.
#[derive(Clone)]
pub struct EpisodeScorer {
    pub env: Box<dyn Environment>,
    pub ls: LearningSystem,
    pub agent: AgentConfig,
    pub steps: usize,
    pub seeds: Vec<u64>,
    objective: Arc<Objective>,
}

impl EpisodeScorer {
    pub fn new(
        env: Box<dyn Environment>,
        ls: LearningSystem,
        agent: AgentConfig,
        steps: usize,
        seeds: Vec<u64>,
        objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            env,
            ls,
            agent,
            steps,
            seeds,
            objective: Arc::new(objective),
        }
    }
}

impl FitnessScorer for EpisodeScorer {
    fn score(&self, cm: &ContentmentModel) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for &seed in &self.seeds {
            let mut env = self.env.clone();
            let mut agent = ManicAgent::new(
                AgentConfig {
                    online_learning: false,
                    ..self.agent.clone()
                },
                self.ls.clone(),
                cm.clone(),
                env.action_space(),
            )?;
            let trace = run_episode(&mut agent, env.as_mut(), self.steps, seed)?;
            for s in trace.steps.iter().skip(1).map(|s| &s.state).chain([&trace.final_state]) {
                total += (self.objective)(s);
                count += 1;
            }
        }
        Ok(total / count.max(1) as f64)
    }
}

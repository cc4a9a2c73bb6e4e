//! The agent loop: perceive, update beliefs, plan, act, and optionally learn.

mod baseline;
mod scorer;
mod trace;

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{fit_supervised, MemoryPolicyAgent, PolicyAgent};
pub use scorer::EpisodeScorer;
pub use trace::{run_episode, EpisodeTrace, FrameRef, FrameStorage, StepRecord};

use crate::contentment::ContentmentModel;
use crate::error::{Error, Result};
use crate::learning::{decoder_input, error_signal_pixels, LearningSystem, RefineOptions};
use crate::planner::{GaParams, PlanPool};
use crate::types::{ActionSpace, ActionVector, BeliefVector, Observation};

/// How beliefs are obtained from each new observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    /// Apply `g_plus` to every frame.
    Encoder,
    /// Refine the predicted belief through the decoder on every frame.
    Inference,
    /// Encode the first frame, infer afterwards.
    Hybrid,
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Self::Encoder),
            "inference" => Ok(Self::Inference),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::Config(format!("unknown encoder mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub steps: usize,
    pub rate: f64,
    pub sample_pixels: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            rate: 0.05,
            sample_pixels: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub pool_size: usize,
    pub horizon: usize,
    pub refine_iterations: usize,
    pub mode: EncoderMode,
    pub inference: InferenceConfig,
    pub introspection: bool,
    /// Number of sampled model parameters appended to each percept.
    pub introspection_samples: usize,
    pub online_learning: bool,
    pub online_rate: f64,
    /// Decoder pixels trained per online step.
    pub online_pixels: usize,
    pub ga: GaParams,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            pool_size: 64,
            horizon: 10,
            refine_iterations: 10,
            mode: EncoderMode::Hybrid,
            inference: InferenceConfig::default(),
            introspection: false,
            introspection_samples: 64,
            online_learning: false,
            online_rate: 0.001,
            online_pixels: 64,
            ga: GaParams::default(),
            seed: 0,
        }
    }
}

impl AgentConfig {
    /// Length of the auxiliary percept block introspection adds.
    pub fn aux_dims(&self, belief_dims: usize) -> usize {
        if self.introspection {
            self.introspection_samples + belief_dims
        } else {
            0
        }
    }
}

/// What an agent reports about one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub action: ActionVector,
    pub belief: Option<BeliefVector>,
    /// Anticipated next observation under the chosen action.
    pub predicted: Option<Observation>,
    /// RMS pixel error between this observation and last step's prediction.
    pub error_norm: Option<f64>,
    pub elite_utility: Option<f64>,
}

impl StepOutcome {
    pub fn action_only(action: ActionVector) -> Self {
        Self {
            action,
            belief: None,
            predicted: None,
            error_norm: None,
            elite_utility: None,
        }
    }
}

/// Anything that maps a stream of observations to actions.
pub trait Agent {
    fn act(&mut self, x: &Observation) -> Result<StepOutcome>;

    /// Clears per-episode state such as beliefs.
    fn reset(&mut self);
}

/// Stages of one agent step, in the order they ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perceive,
    BeliefUpdate,
    ErrorSignal,
    Evaluate,
    Refine,
    Choose,
    Learn,
}

/// Beliefs and action carried from one step to the next.
#[derive(Debug, Clone)]
struct Carry {
    belief: BeliefVector,
    action: ActionVector,
    predicted_belief: BeliefVector,
    predicted_frame: Observation,
}

#[derive(Debug, Clone)]
pub struct ManicAgent {
    cfg: AgentConfig,
    ls: LearningSystem,
    cm: Arc<ContentmentModel>,
    space: ActionSpace,
    pool: PlanPool,
    carry: Option<Carry>,
    steps: usize,
    introspection_indices: Vec<usize>,
    phases: Vec<Phase>,
    rng: ChaCha8Rng,
}

impl ManicAgent {
    pub fn new(cfg: AgentConfig, ls: LearningSystem, cm: ContentmentModel, space: ActionSpace) -> Result<Self> {
        Self::with_shared_contentment(cfg, ls, Arc::new(cm), space)
    }

    pub fn with_shared_contentment(
        cfg: AgentConfig,
        ls: LearningSystem,
        cm: Arc<ContentmentModel>,
        space: ActionSpace,
    ) -> Result<Self> {
        let d = ls.belief_dims();
        if cm.belief_dims() != d {
            return Err(Error::shape("contentment input", d, cm.belief_dims()));
        }
        if space.dims() != ls.action_dims() {
            return Err(Error::shape("action space", ls.action_dims(), space.dims()));
        }
        if cfg.pool_size == 0 || cfg.horizon == 0 {
            return Err(Error::Config("pool_size and horizon must be positive".into()));
        }
        if cfg.online_learning && !(cfg.online_rate > 0.0) {
            return Err(Error::Config("online_rate must be positive".into()));
        }
        if cfg.mode == EncoderMode::Encoder && ls.g_plus.is_none() {
            return Err(Error::Config("encoder mode needs a learning system with an encoder".into()));
        }
        if ls.dims().aux_dims != cfg.aux_dims(d) {
            return Err(Error::Config(format!(
                "learning system expects {} auxiliary percepts but the agent supplies {}",
                ls.dims().aux_dims,
                cfg.aux_dims(d)
            )));
        }
        let total_params = model_param_count(&ls);
        if cfg.introspection && cfg.introspection_samples > total_params {
            return Err(Error::Config(format!(
                "introspection samples {} exceed {} model parameters",
                cfg.introspection_samples, total_params
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let introspection_indices = if cfg.introspection {
            let mut idx = sample(&mut rng, total_params, cfg.introspection_samples).into_vec();
            idx.sort_unstable();
            idx
        } else {
            Vec::new()
        };
        let pool = PlanPool::with_params(
            cfg.pool_size,
            cfg.horizon,
            &space,
            cfg.ga.clone(),
            cfg.seed.wrapping_add(1),
        )?;
        Ok(Self {
            cfg,
            ls,
            cm,
            space,
            pool,
            carry: None,
            steps: 0,
            introspection_indices,
            phases: Vec::new(),
            rng,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn learning_system(&self) -> &LearningSystem {
        &self.ls
    }

    pub fn learning_system_mut(&mut self) -> &mut LearningSystem {
        &mut self.ls
    }

    pub fn contentment(&self) -> Arc<ContentmentModel> {
        Arc::clone(&self.cm)
    }

    /// Replaces `h`. A step already running keeps the snapshot it started with.
    pub fn set_contentment(&mut self, cm: Arc<ContentmentModel>) -> Result<()> {
        if cm.belief_dims() != self.ls.belief_dims() {
            return Err(Error::shape("contentment input", self.ls.belief_dims(), cm.belief_dims()));
        }
        self.cm = cm;
        Ok(())
    }

    pub fn pool(&self) -> &PlanPool {
        &self.pool
    }

    pub fn belief(&self) -> Option<&BeliefVector> {
        self.carry.as_ref().map(|c| &c.belief)
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Phases of the most recent step.
    pub fn last_phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn introspection_indices(&self) -> &[usize] {
        &self.introspection_indices
    }

    /// Introspection is fixed when the agent is built.
    pub fn enable_introspection(&mut self, _samples: usize) -> Result<()> {
        Err(Error::Config(
            "introspection must be configured before the agent is initialised".into(),
        ))
    }

    /// Appends sampled model parameters and the current belief, each mapped
    /// from [-1, 1] onto [0, 1], to the external observation.
    pub fn introspective_observe(&self, x: &Observation) -> Result<Observation> {
        if !self.cfg.introspection {
            return Err(Error::Config("introspection is disabled".into()));
        }
        let squash = |p: f64| (p.clamp(-1.0, 1.0) + 1.0) / 2.0;
        let mut aux: Vec<f64> = self
            .introspection_indices
            .iter()
            .map(|&i| squash(model_param(&self.ls, i)))
            .collect();
        let d = self.ls.belief_dims();
        match self.belief() {
            Some(v) => aux.extend(v.iter().map(|&b| squash(b))),
            None => aux.extend(std::iter::repeat_n(0.5, d)),
        }
        Ok(Observation {
            dims: x.dims,
            pixels: x.pixels.clone(),
            aux,
        })
    }

    fn infer(&self, start: &BeliefVector, x: &Observation) -> Result<BeliefVector> {
        let opts = RefineOptions {
            steps: self.cfg.inference.steps,
            rate: self.cfg.inference.rate,
            sample_pixels: self.cfg.inference.sample_pixels,
            seed: self.cfg.seed.wrapping_add(self.steps as u64),
        };
        self.ls.refine_beliefs_with(start, x, &opts)
    }

    fn update_belief(&self, x: &Observation) -> Result<BeliefVector> {
        let start = self
            .carry
            .as_ref()
            .map(|c| c.predicted_belief.clone())
            .unwrap_or_else(|| BeliefVector::zeros(self.ls.belief_dims()));
        match self.cfg.mode {
            EncoderMode::Encoder => self.ls.encode(x),
            EncoderMode::Hybrid if self.carry.is_none() && self.ls.g_plus.is_some() => self.ls.encode(x),
            _ => self.infer(&start, x),
        }
    }

    /// One pass of the perceive / believe / plan / act loop.
    pub fn agent_step(&mut self, x: &Observation) -> Result<StepOutcome> {
        self.phases.clear();
        let cm = Arc::clone(&self.cm);
        let x = if self.cfg.introspection {
            self.introspective_observe(x)?
        } else {
            x.clone()
        };
        if x.dims != self.ls.frame() {
            return Err(Error::shape("observation", self.ls.frame().len(), x.dims.len()));
        }
        self.phases.push(Phase::Perceive);

        let v = self.update_belief(&x)?;
        self.phases.push(Phase::BeliefUpdate);

        let error_norm = match &self.carry {
            Some(c) => {
                let e = error_signal_pixels(&x, &c.predicted_frame)?;
                Some((e.iter().map(|v| v * v).sum::<f64>() / e.len().max(1) as f64).sqrt())
            }
            None => None,
        };
        self.phases.push(Phase::ErrorSignal);

        if self.steps > 0 {
            self.pool.advance();
        }
        self.pool.evaluate(&self.ls, &cm, &v)?;
        self.phases.push(Phase::Evaluate);
        self.pool.refine(&self.ls, &cm, &v, self.cfg.refine_iterations)?;
        self.phases.push(Phase::Refine);
        let action = self.pool.choose_action()?;
        let elite_utility = self.pool.elite()?.1;
        self.phases.push(Phase::Choose);

        if self.cfg.online_learning {
            if let Some(prev) = self.carry.take() {
                self.learn_online(&prev.belief, &prev.action, &v, &x)?;
                self.phases.push(Phase::Learn);
            }
        }

        let predicted_belief = self.ls.predict_transition(&v, &action)?;
        let predicted_frame = self.ls.decode_frame(&predicted_belief)?;
        self.carry = Some(Carry {
            belief: v.clone(),
            action: action.clone(),
            predicted_belief,
            predicted_frame: predicted_frame.clone(),
        });
        self.steps += 1;
        Ok(StepOutcome {
            action,
            belief: Some(v),
            predicted: Some(predicted_frame),
            error_norm,
            elite_utility: Some(elite_utility),
        })
    }

    /// One SGD step on `f` for the realized transition and on `g` for a pixel
    /// sample of the current frame.
    fn learn_online(&mut self, v_prev: &BeliefVector, u: &ActionVector, v: &BeliefVector, x: &Observation) -> Result<()> {
        let rate = self.cfg.online_rate;
        let mut input = v_prev.as_slice().to_vec();
        input.extend_from_slice(u);
        self.ls.f.train_step(&input, v, rate)?;
        let dims = x.dims;
        let count = self.cfg.online_pixels.min(dims.pixel_count());
        for k in sample(&mut self.rng, dims.pixel_count(), count) {
            let (i, j) = (k % dims.width, k / dims.width);
            let (px, py) = dims.pixel_center(i, j);
            self.ls.g.train_step(&decoder_input(v, px, py), x.pixel(i, j), rate)?;
        }
        Ok(())
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }
}

impl Agent for ManicAgent {
    fn act(&mut self, x: &Observation) -> Result<StepOutcome> {
        self.agent_step(x)
    }

    fn reset(&mut self) {
        self.carry = None;
        self.steps = 0;
        self.phases.clear();
    }
}

/// Parameters of `f`, `g` and `g_plus`, concatenated in that order.
fn model_param_count(ls: &LearningSystem) -> usize {
    ls.f.param_count() + ls.g.param_count() + ls.g_plus.as_ref().map_or(0, |e| e.param_count())
}

fn model_param(ls: &LearningSystem, mut i: usize) -> f64 {
    for net in [Some(&ls.f), Some(&ls.g), ls.g_plus.as_ref()].into_iter().flatten() {
        if i < net.param_count() {
            return net.param(i).expect("index within model");
        }
        i -= net.param_count();
    }
    panic!("introspection index beyond model parameters")
}

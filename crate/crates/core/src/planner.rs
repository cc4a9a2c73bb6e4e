//! Plan pool refined by a genetic algorithm against the contentment model.
//!
//! The pool moves through a small state machine: `evaluate` attaches scores,
//! `refine` evolves and re-scores, `choose_action` reads the elite, and
//! `advance` shifts every plan by one step and invalidates the scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contentment::ContentmentModel;
use crate::env::raster::gaussian;
use crate::error::{Error, Result};
use crate::learning::LearningSystem;
use crate::types::{ActionSpace, ActionVector, BeliefVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub crossover: f64,
    /// Per-step probability of mutating an action.
    pub mutation: f64,
    /// Gaussian step for continuous actions.
    pub mutation_sigma: f64,
    pub max_horizon: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            crossover: 0.7,
            mutation: 0.2,
            mutation_sigma: 0.1,
            max_horizon: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<ActionVector>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Steps at which two equal-length plans choose different actions.
    pub fn hamming(&self, other: &Plan) -> usize {
        self.actions
            .iter()
            .zip(&other.actions)
            .filter(|(a, b)| a != b)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPool {
    plans: Vec<Plan>,
    /// `None` until evaluated and after any mutating operation.
    scores: Option<Vec<f64>>,
    elite_index: usize,
    space: ActionSpace,
    params: GaParams,
    rng: ChaCha8Rng,
}

impl PlanPool {
    /// `n` uniformly random plans of horizon `horizon`, with default GA rates.
    pub fn init(n: usize, horizon: usize, space: &ActionSpace, seed: u64) -> Result<Self> {
        Self::with_params(n, horizon, space, GaParams::default(), seed)
    }

    pub fn with_params(n: usize, horizon: usize, space: &ActionSpace, params: GaParams, seed: u64) -> Result<Self> {
        if n < 1 || horizon < 1 {
            return Err(Error::InvalidArgument(format!(
                "plan pool needs N >= 1 and L >= 1, got N={n}, L={horizon}"
            )));
        }
        if horizon > params.max_horizon {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} exceeds max_horizon {}",
                params.max_horizon
            )));
        }
        for (name, p) in [("crossover", params.crossover), ("mutation", params.mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plans = (0..n)
            .map(|_| Plan {
                actions: (0..horizon).map(|_| space.sample(&mut rng)).collect(),
            })
            .collect();
        Ok(Self {
            plans,
            scores: None,
            elite_index: 0,
            space: space.clone(),
            params,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.plans[0].len()
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn is_evaluated(&self) -> bool {
        self.scores.is_some()
    }

    pub fn scores(&self) -> Result<&[f64]> {
        self.scores.as_deref().ok_or(Error::StalePool)
    }

    pub fn elite_index(&self) -> Result<usize> {
        self.scores()?;
        Ok(self.elite_index)
    }

    pub fn elite(&self) -> Result<(&Plan, f64)> {
        let scores = self.scores()?;
        Ok((&self.plans[self.elite_index], scores[self.elite_index]))
    }

    /// Replaces plan `i`, invalidating scores.
    pub fn set_plan(&mut self, i: usize, plan: Plan) -> Result<()> {
        if plan.len() != self.horizon() {
            return Err(Error::shape("plan horizon", self.horizon(), plan.len()));
        }
        for a in &plan.actions {
            self.space.validate(a)?;
        }
        self.plans[i] = plan;
        self.scores = None;
        Ok(())
    }

    /// SHA-256 over the serialized pool, rng state included.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan pool serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Scores every plan as the utility of its imagined belief trace.
    pub fn evaluate(&mut self, ls: &LearningSystem, cm: &ContentmentModel, v0: &BeliefVector) -> Result<()> {
        let scores = score_plans(&self.plans, ls, cm, v0)?;
        self.set_scores(scores);
        Ok(())
    }

    fn set_scores(&mut self, scores: Vec<f64>) {
        let mut elite = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[elite] {
                elite = i;
            }
        }
        self.elite_index = elite;
        self.scores = Some(scores);
    }

    /// `iterations` generations of elitist GA. The elite moves to slot 0 and is
    /// carried over unchanged, so the elite score never decreases.
    pub fn refine(
        &mut self,
        ls: &LearningSystem,
        cm: &ContentmentModel,
        v0: &BeliefVector,
        iterations: usize,
    ) -> Result<()> {
        self.scores()?;
        for _ in 0..iterations {
            let scores = self.scores.take().ok_or(Error::StalePool)?;
            let elite = self.plans[self.elite_index].clone();
            let mut next = Vec::with_capacity(self.plans.len());
            next.push(elite);
            while next.len() < self.plans.len() {
                let a = self.tournament(&scores);
                let b = self.tournament(&scores);
                let mut child = if self.rng.random::<f64>() < self.params.crossover {
                    self.crossover(&self.plans[a].clone(), &self.plans[b].clone())
                } else {
                    self.plans[a].clone()
                };
                self.mutate(&mut child);
                next.push(child);
            }
            let mut new_scores = vec![scores[self.elite_index]];
            new_scores.extend(score_plans(&next[1..], ls, cm, v0)?);
            self.plans = next;
            self.set_scores(new_scores);
        }
        Ok(())
    }

    fn tournament(&mut self, scores: &[f64]) -> usize {
        let n = self.plans.len();
        let a = self.rng.random_range(0..n);
        let b = self.rng.random_range(0..n);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if scores[hi] > scores[lo] {
            hi
        } else {
            lo
        }
    }

    fn crossover(&mut self, a: &Plan, b: &Plan) -> Plan {
        let l = a.len();
        if l < 2 {
            return a.clone();
        }
        let cut = self.rng.random_range(1..l);
        let mut actions = a.actions[..cut].to_vec();
        actions.extend_from_slice(&b.actions[cut..]);
        Plan { actions }
    }

    fn mutate(&mut self, plan: &mut Plan) {
        for action in &mut plan.actions {
            if self.rng.random::<f64>() >= self.params.mutation {
                continue;
            }
            *action = match &self.space {
                ActionSpace::Discrete { .. } => self.space.sample(&mut self.rng),
                ActionSpace::Continuous { low, high } => ActionVector::new(
                    action
                        .iter()
                        .zip(low.iter().zip(high))
                        .map(|(x, (l, h))| (x + gaussian(&mut self.rng, self.params.mutation_sigma)).clamp(*l, *h))
                        .collect(),
                ),
            };
        }
    }

    /// First action of the elite plan. Does not modify the pool.
    pub fn choose_action(&self) -> Result<ActionVector> {
        Ok(self.elite()?.0.actions[0].clone())
    }

    /// Drops the first action of every plan and appends a fresh random one.
    pub fn advance(&mut self) {
        for plan in &mut self.plans {
            plan.actions.remove(0);
            plan.actions.push(self.space.sample(&mut self.rng));
        }
        self.scores = None;
    }
}

fn score_plans(plans: &[Plan], ls: &LearningSystem, cm: &ContentmentModel, v0: &BeliefVector) -> Result<Vec<f64>> {
    if cm.belief_dims() != ls.belief_dims() {
        return Err(Error::shape("contentment input", ls.belief_dims(), cm.belief_dims()));
    }
    plans
        .par_iter()
        .map(|p| cm.plan_utility(&ls.rollout(v0, &p.actions)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::Approximator;
    use crate::learning::SystemDims;
    use crate::types::FrameDims;

    /// 1-D world where actions move the belief by -0.2, 0, +0.2.
    fn line_world(n_actions: usize) -> LearningSystem {
        let mut f = Approximator::zeros(&[1 + n_actions, 1]).unwrap();
        let w = f.weights_mut(0);
        w[0] = 1.0;
        for a in 0..n_actions {
            w[1 + a] = 0.2 * (a as f64 - (n_actions - 1) as f64 / 2.0);
        }
        let g = Approximator::zeros(&[3, 1]).unwrap();
        let dims = SystemDims {
            belief_dims: 1,
            action_dims: n_actions,
            frame: FrameDims::new(2, 2, 1),
            aux_dims: 0,
        };
        LearningSystem::from_parts(f, g, None, dims).unwrap()
    }

    /// `h(v) = v`, so utility favours moving right.
    fn rightward() -> ContentmentModel {
        let mut h = Approximator::zeros(&[1, 1]).unwrap();
        h.weights_mut(0)[0] = 1.0;
        ContentmentModel::from_approximator(h).unwrap()
    }

    fn constant(c: f64) -> ContentmentModel {
        let mut h = Approximator::zeros(&[1, 1]).unwrap();
        h.biases_mut(0)[0] = c;
        ContentmentModel::from_approximator(h).unwrap()
    }

    fn v0() -> BeliefVector {
        BeliefVector::new(vec![0.0]).unwrap()
    }

    #[test]
    fn init_contracts() {
        let space = ActionSpace::Discrete { n: 4 };
        let one = PlanPool::init(1, 1, &space, 0).unwrap();
        assert_eq!((one.len(), one.horizon()), (1, 1));
        assert_eq!(PlanPool::init(5, 3, &space, 7).unwrap(), PlanPool::init(5, 3, &space, 7).unwrap());
        let pool = PlanPool::init(100, 5, &space, 1).unwrap();
        for plan in pool.plans() {
            for a in &plan.actions {
                space.validate(a).unwrap();
            }
        }
        assert!(PlanPool::init(0, 3, &space, 0).is_err());
        assert!(PlanPool::init(3, 0, &space, 0).is_err());
        assert!(PlanPool::init(3, 21, &space, 0).is_err());
    }

    #[test]
    fn reads_require_evaluation() {
        let space = ActionSpace::Discrete { n: 3 };
        let mut pool = PlanPool::init(4, 3, &space, 0).unwrap();
        assert!(matches!(pool.choose_action(), Err(Error::StalePool)));
        let ls = line_world(3);
        assert!(pool.refine(&ls, &rightward(), &v0(), 1).is_err());
        pool.evaluate(&ls, &rightward(), &v0()).unwrap();
        assert!(pool.choose_action().is_ok());
        pool.advance();
        assert!(matches!(pool.choose_action(), Err(Error::StalePool)));
    }

    #[test]
    fn constant_contentment_ties_to_first_plan() {
        let space = ActionSpace::Discrete { n: 3 };
        let mut pool = PlanPool::init(6, 3, &space, 2).unwrap();
        pool.evaluate(&line_world(3), &constant(0.4), &v0()).unwrap();
        assert!(pool.scores().unwrap().iter().all(|&s| (s - 0.4).abs() < 1e-15));
        assert_eq!(pool.elite_index().unwrap(), 0);
        assert_eq!(pool.choose_action().unwrap(), pool.plans()[0].actions[0]);
    }

    #[test]
    fn choose_action_is_a_pure_read() {
        let space = ActionSpace::Discrete { n: 3 };
        let mut pool = PlanPool::init(8, 3, &space, 3).unwrap();
        pool.evaluate(&line_world(3), &rightward(), &v0()).unwrap();
        let before = pool.hash();
        pool.choose_action().unwrap();
        assert_eq!(before, pool.hash());
    }

    #[test]
    fn zero_iterations_change_nothing() {
        let space = ActionSpace::Discrete { n: 3 };
        let ls = line_world(3);
        let mut pool = PlanPool::init(8, 3, &space, 4).unwrap();
        pool.evaluate(&ls, &rightward(), &v0()).unwrap();
        let before = pool.clone();
        pool.refine(&ls, &rightward(), &v0(), 0).unwrap();
        assert_eq!(before, pool);
    }

    #[test]
    fn advance_shifts_and_extends() {
        let space = ActionSpace::Discrete { n: 3 };
        let mut pool = PlanPool::init(3, 3, &space, 5).unwrap();
        let before: Vec<Plan> = pool.plans().to_vec();
        pool.advance();
        for (old, new) in before.iter().zip(pool.plans()) {
            assert_eq!(&old.actions[1..], &new.actions[..2]);
            space.validate(&new.actions[2]).unwrap();
        }
        let mut single = PlanPool::init(1, 1, &space, 6).unwrap();
        single.advance();
        assert_eq!(single.horizon(), 1);
    }

    #[test]
    fn selection_only_converges_to_elite() {
        let space = ActionSpace::Discrete { n: 3 };
        let params = GaParams {
            crossover: 0.0,
            mutation: 0.0,
            ..GaParams::default()
        };
        let ls = line_world(3);
        let cm = rightward();
        let mut pool = PlanPool::with_params(8, 3, &space, params, 9).unwrap();
        pool.evaluate(&ls, &cm, &v0()).unwrap();
        let elite_score = pool.elite().unwrap().1;
        for _ in 0..8 * 3 {
            pool.refine(&ls, &cm, &v0(), 1).unwrap();
            assert_eq!(pool.elite().unwrap().1, elite_score);
        }
        let elite = pool.elite().unwrap().0.clone();
        assert!(pool.plans().iter().all(|p| *p == elite));
    }

    #[test]
    fn continuous_mutation_respects_bounds() {
        let space = ActionSpace::Continuous {
            low: vec![-1.0],
            high: vec![1.0],
        };
        let params = GaParams {
            mutation: 1.0,
            mutation_sigma: 5.0,
            ..GaParams::default()
        };
        let mut f = Approximator::zeros(&[2, 1]).unwrap();
        f.weights_mut(0).copy_from_slice(&[1.0, 0.1]);
        let dims = SystemDims {
            belief_dims: 1,
            action_dims: 1,
            frame: FrameDims::new(2, 2, 1),
            aux_dims: 0,
        };
        let ls = LearningSystem::from_parts(f, Approximator::zeros(&[3, 1]).unwrap(), None, dims).unwrap();
        let mut pool = PlanPool::with_params(10, 4, &space, params, 1).unwrap();
        pool.evaluate(&ls, &rightward(), &v0()).unwrap();
        pool.refine(&ls, &rightward(), &v0(), 5).unwrap();
        for plan in pool.plans() {
            assert!(plan.actions.iter().all(|a| (-1.0..=1.0).contains(&a[0])));
        }
    }
}

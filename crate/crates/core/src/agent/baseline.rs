//! Reactive baselines: a direct observation-to-action policy, and a policy
//! that reads a belief threaded through a learned memory model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Agent, StepOutcome};
use crate::approximator::Approximator;
use crate::error::{Error, Result};
use crate::learning::ENCODER_DOWNSAMPLE;
use crate::types::{argmax, ActionVector, BeliefVector, Observation};

fn percept(x: &Observation, factor: usize) -> Vec<f64> {
    x.downsample(factor).flat()
}

fn greedy(policy: &Approximator, input: &[f64]) -> Result<ActionVector> {
    let scores = policy.forward(input)?;
    Ok(ActionVector::one_hot(scores.len(), argmax(&scores)))
}

/// Maps the downsampled current frame straight to an action.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub policy: Approximator,
    downsample: usize,
}

impl PolicyAgent {
    pub fn new(policy: Approximator) -> Self {
        Self::with_downsample(policy, ENCODER_DOWNSAMPLE)
    }

    pub fn with_downsample(policy: Approximator, downsample: usize) -> Self {
        Self {
            policy,
            downsample: downsample.max(1),
        }
    }

    pub fn input(&self, x: &Observation) -> Vec<f64> {
        percept(x, self.downsample)
    }
}

impl Agent for PolicyAgent {
    fn act(&mut self, x: &Observation) -> Result<StepOutcome> {
        Ok(StepOutcome::action_only(greedy(&self.policy, &self.input(x))?))
    }

    fn reset(&mut self) {}
}

/// Threads a belief through `memory(belief, percept)` and acts on
/// `policy(belief)`.
#[derive(Debug, Clone)]
pub struct MemoryPolicyAgent {
    pub memory: Approximator,
    pub policy: Approximator,
    belief: Vec<f64>,
    downsample: usize,
}

impl MemoryPolicyAgent {
    pub fn new(memory: Approximator, policy: Approximator) -> Result<Self> {
        Self::with_downsample(memory, policy, ENCODER_DOWNSAMPLE)
    }

    pub fn with_downsample(memory: Approximator, policy: Approximator, downsample: usize) -> Result<Self> {
        let d = memory.output_len();
        if policy.input_len() != d {
            return Err(Error::shape("policy input", d, policy.input_len()));
        }
        if memory.input_len() <= d {
            return Err(Error::InvalidTopology(
                "memory input must hold the belief plus a percept".into(),
            ));
        }
        Ok(Self {
            memory,
            policy,
            belief: vec![0.0; d],
            downsample: downsample.max(1),
        })
    }

    pub fn belief_dims(&self) -> usize {
        self.belief.len()
    }

    /// Memory input for a given prior belief and frame.
    pub fn memory_input(&self, belief: &[f64], x: &Observation) -> Vec<f64> {
        let mut input = belief.to_vec();
        input.extend(percept(x, self.downsample));
        input
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }
}

impl Agent for MemoryPolicyAgent {
    fn act(&mut self, x: &Observation) -> Result<StepOutcome> {
        let input = self.memory_input(&self.belief, x);
        let belief = BeliefVector::new(self.memory.forward(&input)?)?;
        self.belief = belief.as_slice().to_vec();
        let mut out = StepOutcome::action_only(greedy(&self.policy, &self.belief)?);
        out.belief = Some(belief);
        Ok(out)
    }

    fn reset(&mut self) {
        self.belief.iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Shuffled SGD on labelled pairs. Returns the mean loss of the last epoch.
pub fn fit_supervised(
    net: &mut Approximator,
    samples: &[(Vec<f64>, Vec<f64>)],
    epochs: usize,
    rate: f64,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() || epochs == 0 {
        return Err(Error::InvalidArgument("supervised fit needs samples and epochs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut last = 0.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += net.train_step(&samples[i].0, &samples[i].1, rate)?;
        }
        last = total / samples.len() as f64;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FrameDims;

    #[test]
    fn zero_policy_always_picks_first_action() {
        let mut agent = PolicyAgent::new(Approximator::zeros(&[3, 4]).unwrap());
        for v in [0.0, 0.4, 1.0] {
            let x = Observation::filled(FrameDims::new(4, 4, 3), v);
            assert_eq!(agent.act(&x).unwrap().action.argmax(), 0);
        }
    }

    #[test]
    fn memory_agent_checks_shapes() {
        let mem = Approximator::zeros(&[5, 2]).unwrap();
        assert!(MemoryPolicyAgent::new(mem.clone(), Approximator::zeros(&[3, 2]).unwrap()).is_err());
        assert!(MemoryPolicyAgent::new(Approximator::zeros(&[2, 2]).unwrap(), Approximator::zeros(&[2, 2]).unwrap()).is_err());
        assert!(MemoryPolicyAgent::new(mem, Approximator::zeros(&[2, 3]).unwrap()).is_ok());
    }

    #[test]
    fn memory_agent_resets_its_belief() {
        let mut mem = Approximator::zeros(&[4, 1]).unwrap();
        mem.biases_mut(0)[0] = 0.7;
        let mut agent = MemoryPolicyAgent::new(mem, Approximator::zeros(&[1, 2]).unwrap()).unwrap();
        agent.act(&Observation::filled(FrameDims::new(4, 4, 3), 0.2)).unwrap();
        assert_eq!(agent.belief(), &[0.7]);
        agent.reset();
        assert_eq!(agent.belief(), &[0.0]);
    }

    #[test]
    fn supervised_fit_reduces_loss() {
        let mut net = Approximator::new(&[1, 4, 1], 2).unwrap();
        let samples: Vec<_> = (0..10).map(|i| (vec![i as f64 / 10.0], vec![i as f64 / 20.0])).collect();
        let first = fit_supervised(&mut net, &samples, 1, 0.1, 0).unwrap();
        let later = fit_supervised(&mut net, &samples, 200, 0.1, 0).unwrap();
        assert!(later < first);
    }
}

//! One-dimensional brightness ramp. Exists as a manifold-learning fixture:
//! frame brightness is an affine function of the single state variable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raster::{gaussian, Canvas};
use super::{discrete_index, EnvKind, Environment, NoiseConfig};
use crate::error::{Error, Result};
use crate::types::{ActionSpace, ActionVector, FrameDims, Observation};

#[derive(Debug, Clone)]
pub struct Ramp {
    level: f64,
    noise: NoiseConfig,
    dims: FrameDims,
    rng: ChaCha8Rng,
}

impl Ramp {
    pub fn new(noise: NoiseConfig) -> Self {
        Self {
            level: 0.5,
            noise,
            dims: FrameDims::new(8, 8, 1),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn brightness(level: f64) -> f64 {
        0.1 + 0.8 * level
    }
}

impl Environment for Ramp {
    fn kind(&self) -> EnvKind {
        EnvKind::RampTest
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.level = self.rng.random_range(0.0..1.0);
        self.state()
    }

    /// Actions: down, up.
    fn step(&mut self, action: &ActionVector) -> Result<Vec<f64>> {
        let delta = if discrete_index(action, 2)? == 0 { -0.02 } else { 0.02 };
        self.level = (self.level + delta + gaussian(&mut self.rng, self.noise.transition)).clamp(0.0, 1.0);
        Ok(self.state())
    }

    fn render(&mut self) -> Observation {
        let canvas = Canvas::new(self.dims, &[Self::brightness(self.level)]);
        canvas.finish(self.noise.observation, &mut self.rng)
    }

    fn state(&self) -> Vec<f64> {
        vec![self.level]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        match state {
            [l] if (0.0..=1.0).contains(l) => {
                self.level = *l;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("illegal ramp state {state:?}"))),
        }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 2 }
    }

    fn frame_dims(&self) -> FrameDims {
        self.dims
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

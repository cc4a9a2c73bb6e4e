//! Two degree-of-freedom crane seen from the side.
//!
//! State is `(boom, cable)` in `[0, 1]^2`: `boom` places the trolley along the
//! beam at the top of the frame, `cable` sets how far the load hangs below it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raster::{gaussian, Canvas};
use super::{discrete_index, EnvKind, Environment, NoiseConfig};
use crate::error::{Error, Result};
use crate::types::{ActionSpace, ActionVector, FrameDims, Observation};

pub const STRIDE: f64 = 0.02;

const BACKGROUND: [f64; 3] = [0.80, 0.86, 0.92];
const BEAM: [f64; 3] = [0.25, 0.25, 0.30];
const TROLLEY: [f64; 3] = [0.95, 0.75, 0.10];
const CABLE: [f64; 3] = [0.15, 0.15, 0.15];
const LOAD: [f64; 3] = [0.80, 0.20, 0.15];

#[derive(Debug, Clone)]
pub struct Crane {
    boom: f64,
    cable: f64,
    noise: NoiseConfig,
    dims: FrameDims,
    rng: ChaCha8Rng,
}

impl Crane {
    /// Actions in order: left, right, up, down.
    pub const ACTIONS: [&'static str; 4] = ["left", "right", "up", "down"];

    pub fn new(noise: NoiseConfig) -> Self {
        Self {
            boom: 0.5,
            cable: 0.5,
            noise,
            dims: FrameDims::new(64, 48, 3),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise
    }

    /// Noiseless frame of an arbitrary state.
    pub fn render_state(&self, boom: f64, cable: f64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.draw(boom, cable).finish(0.0, &mut rng)
    }

    fn draw(&self, boom: f64, cable: f64) -> Canvas {
        let mut canvas = Canvas::new(self.dims, &BACKGROUND);
        let x = 9.0 + boom * 46.0;
        let hook = 9.0 + cable * 28.0;
        canvas.rect(1.0, 3.0, 63.0, 6.0, &BEAM);
        canvas.rect(x - 1.2, 7.0, x + 1.2, hook, &CABLE);
        canvas.rect(x - 5.0, 1.5, x + 5.0, 8.0, &TROLLEY);
        canvas.rect(x - 12.0, hook, x + 12.0, hook + 10.0, &LOAD);
        canvas
    }
}

impl Environment for Crane {
    fn kind(&self) -> EnvKind {
        EnvKind::Crane
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.boom = self.rng.random_range(0.3..0.7);
        self.cable = self.rng.random_range(0.3..0.7);
        self.state()
    }

    fn step(&mut self, action: &ActionVector) -> Result<Vec<f64>> {
        let (db, dc) = match discrete_index(action, 4)? {
            0 => (-STRIDE, 0.0),
            1 => (STRIDE, 0.0),
            2 => (0.0, -STRIDE),
            _ => (0.0, STRIDE),
        };
        let nb = gaussian(&mut self.rng, self.noise.transition);
        let nc = gaussian(&mut self.rng, self.noise.transition);
        self.boom = (self.boom + db + nb).clamp(0.0, 1.0);
        self.cable = (self.cable + dc + nc).clamp(0.0, 1.0);
        Ok(self.state())
    }

    fn render(&mut self) -> Observation {
        let canvas = self.draw(self.boom, self.cable);
        canvas.finish(self.noise.observation, &mut self.rng)
    }

    fn state(&self) -> Vec<f64> {
        vec![self.boom, self.cable]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        match state {
            [b, c] if (0.0..=1.0).contains(b) && (0.0..=1.0).contains(c) => {
                self.boom = *b;
                self.cable = *c;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("illegal crane state {state:?}"))),
        }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 4 }
    }

    fn frame_dims(&self) -> FrameDims {
        self.dims
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(i: usize) -> ActionVector {
        ActionVector::one_hot(4, i)
    }

    #[test]
    fn default_frame_size() {
        let mut crane = Crane::new(NoiseConfig::default());
        crane.reset(0);
        assert_eq!(crane.render().pixels.len(), 9216);
    }

    #[test]
    fn stride_and_saturation() {
        let mut crane = Crane::new(NoiseConfig::NONE);
        crane.set_state(&[0.5, 0.5]).unwrap();
        let s = crane.step(&act(0)).unwrap();
        assert!((s[0] - 0.48).abs() < 1e-12 && s[1] == 0.5);
        crane.set_state(&[0.0, 0.3]).unwrap();
        assert_eq!(crane.step(&act(0)).unwrap(), vec![0.0, 0.3]);
        crane.set_state(&[0.4, 1.0]).unwrap();
        assert_eq!(crane.step(&act(3)).unwrap(), vec![0.4, 1.0]);
    }

    #[test]
    fn malformed_action_rejected() {
        let mut crane = Crane::new(NoiseConfig::NONE);
        assert!(crane.step(&ActionVector::new(vec![1.0, 1.0, 0.0, 0.0])).is_err());
        assert!(crane.step(&ActionVector::one_hot(3, 0)).is_err());
    }

    #[test]
    fn reset_is_seeded_and_in_bounds() {
        let mut crane = Crane::new(NoiseConfig::default());
        let a = crane.reset(17);
        let b = crane.reset(17);
        assert_eq!(a, b);
        let mut distinct = Vec::new();
        for seed in 0..100 {
            let s = crane.reset(seed);
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            if !distinct.contains(&s) {
                distinct.push(s);
            }
        }
        assert!(distinct.len() >= 10);
    }

    #[test]
    fn noiseless_render_is_reproducible() {
        let mut crane = Crane::new(NoiseConfig::NONE);
        crane.set_state(&[0.2, 0.9]).unwrap();
        assert_eq!(crane.render(), crane.render());
    }

    #[test]
    fn transition_noise_std_on_unactuated_axis() {
        let sigma = 0.005;
        let mut crane = Crane::new(NoiseConfig {
            transition: sigma,
            observation: 0.0,
        });
        crane.reset(5);
        let mut deltas = Vec::new();
        for _ in 0..1000 {
            crane.set_state(&[0.5, 0.5]).unwrap();
            let s = crane.step(&act(0)).unwrap();
            deltas.push(s[1] - 0.5);
        }
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - sigma).abs() <= 0.2 * sigma, "std {std}");
    }

    #[test]
    fn distinct_states_render_distinctly() {
        let crane = Crane::new(NoiseConfig::NONE);
        let grid: Vec<Observation> = (0..16)
            .flat_map(|a| (0..16).map(move |b| (a, b)))
            .map(|(a, b)| crane.render_state(a as f64 / 15.0, b as f64 / 15.0))
            .collect();
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let (ai, bi) = (i / 16, i % 16);
                let (aj, bj) = (j / 16, j % 16);
                let state_gap = ((ai as f64 - aj as f64).abs()).max((bi as f64 - bj as f64).abs()) / 15.0;
                let diff = grid[i].mean_abs_diff(&grid[j]).unwrap();
                assert!(diff > 0.0, "grid states {i} and {j} render identically");
                if state_gap >= 0.1 {
                    assert!(diff > 1e-3, "states {i},{j} differ by {diff}");
                }
            }
        }
        let left = crane.render_state(0.0, 0.5);
        let right = crane.render_state(1.0, 0.5);
        assert!(left.mean_abs_diff(&right).unwrap() > 0.01);
    }

    #[test]
    fn fuzzed_actions_stay_in_bounds() {
        let mut crane = Crane::new(NoiseConfig {
            transition: 0.05,
            observation: 0.0,
        });
        crane.reset(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let s = crane.step(&act(rng.random_range(0..4))).unwrap();
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

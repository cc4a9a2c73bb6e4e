//! Top-down warehouse floor with shelving, a goal marker and a mobile robot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{gaussian, Canvas};
use super::{discrete_index, EnvKind, Environment, NoiseConfig};
use crate::error::{Error, Result};
use crate::types::{ActionSpace, ActionVector, FrameDims, Observation};

pub const STRIDE: f64 = 0.02;

const FLOOR: [f64; 3] = [0.78, 0.78, 0.72];
const WALL: [f64; 3] = [0.20, 0.20, 0.22];
const SHELF: [f64; 3] = [0.50, 0.35, 0.20];
const GOAL: [f64; 3] = [0.20, 0.75, 0.25];
const ROBOT: [f64; 3] = [0.10, 0.30, 0.90];

/// Axis-aligned rectangle in floor coordinates (`[0, 1]^2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarehouseMap {
    pub shelves: Vec<Rect>,
    pub goal: (f64, f64),
    pub goal_radius: f64,
}

impl Default for WarehouseMap {
    /// Two racks protruding from the top and bottom walls, goal top right.
    fn default() -> Self {
        Self {
            shelves: vec![
                Rect {
                    x0: 0.30,
                    y0: 0.0,
                    x1: 0.38,
                    y1: 0.25,
                },
                Rect {
                    x0: 0.62,
                    y0: 0.75,
                    x1: 0.70,
                    y1: 1.0,
                },
            ],
            goal: (0.85, 0.2),
            goal_radius: 0.1,
        }
    }
}

impl WarehouseMap {
    /// Seeded layout: two or three wall-mounted racks and a random goal.
    pub fn generated(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.random_range(2..=3);
        let shelves = (0..count)
            .map(|k| {
                let x0 = 0.15 + 0.7 * (k as f64 + rng.random_range(0.1..0.6)) / count as f64;
                let depth = rng.random_range(0.15..0.3);
                let from_top = rng.random_bool(0.5);
                let (y0, y1) = if from_top { (0.0, depth) } else { (1.0 - depth, 1.0) };
                Rect {
                    x0,
                    y0,
                    x1: x0 + 0.08,
                    y1,
                }
            })
            .collect::<Vec<_>>();
        let mut map = Self {
            shelves,
            goal: (0.5, 0.5),
            goal_radius: 0.1,
        };
        loop {
            let goal = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
            if map.is_free(goal.0, goal.1) {
                map.goal = goal;
                return map;
            }
        }
    }

    pub fn is_free(&self, x: f64, y: f64) -> bool {
        (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) && !self.shelves.iter().any(|s| s.contains(x, y))
    }

    pub fn goal_distance(&self, x: f64, y: f64) -> f64 {
        ((x - self.goal.0).powi(2) + (y - self.goal.1).powi(2)).sqrt()
    }

    pub fn in_goal(&self, x: f64, y: f64) -> bool {
        self.goal_distance(x, y) <= self.goal_radius
    }
}

#[derive(Debug, Clone)]
pub struct Warehouse {
    map: WarehouseMap,
    x: f64,
    y: f64,
    noise: NoiseConfig,
    dims: FrameDims,
    rng: ChaCha8Rng,
}

impl Warehouse {
    /// Actions in order: left, right, up, down.
    pub const ACTIONS: [&'static str; 4] = ["left", "right", "up", "down"];

    pub fn new(map: WarehouseMap, noise: NoiseConfig) -> Self {
        Self {
            map,
            x: 0.5,
            y: 0.5,
            noise,
            dims: FrameDims::new(64, 48, 3),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn map(&self) -> &WarehouseMap {
        &self.map
    }

    pub fn at_goal(&self) -> bool {
        self.map.in_goal(self.x, self.y)
    }

    pub fn goal_distance(&self) -> f64 {
        self.map.goal_distance(self.x, self.y)
    }

    fn to_pixels(&self, x: f64, y: f64) -> (f64, f64) {
        (4.0 + x * 56.0, 4.0 + y * 40.0)
    }

    /// Noiseless frame of an arbitrary robot position.
    pub fn render_state(&self, x: f64, y: f64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.draw(x, y).finish(0.0, &mut rng)
    }

    fn draw(&self, x: f64, y: f64) -> Canvas {
        let mut canvas = Canvas::new(self.dims, &WALL);
        let (w, h) = (self.dims.width as f64, self.dims.height as f64);
        canvas.rect(2.5, 2.5, w - 2.5, h - 2.5, &FLOOR);
        for s in &self.map.shelves {
            let (a, b) = self.to_pixels(s.x0, s.y0);
            let (c, d) = self.to_pixels(s.x1, s.y1);
            canvas.rect(a, b, c, d, &SHELF);
        }
        let (gx, gy) = self.to_pixels(self.map.goal.0, self.map.goal.1);
        canvas.rect(gx - 3.0, gy - 3.0, gx + 3.0, gy + 3.0, &GOAL);
        let (rx, ry) = self.to_pixels(x, y);
        canvas.disk(rx, ry, 4.0, &ROBOT);
        canvas
    }
}

impl Environment for Warehouse {
    fn kind(&self) -> EnvKind {
        EnvKind::Warehouse
    }

    /// Uniform free position outside the goal region.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let x = self.rng.random_range(0.0..1.0);
            let y = self.rng.random_range(0.0..1.0);
            if self.map.is_free(x, y) && !self.map.in_goal(x, y) {
                self.x = x;
                self.y = y;
                return self.state();
            }
        }
    }

    fn step(&mut self, action: &ActionVector) -> Result<Vec<f64>> {
        let (dx, dy) = match discrete_index(action, 4)? {
            0 => (-STRIDE, 0.0),
            1 => (STRIDE, 0.0),
            2 => (0.0, -STRIDE),
            _ => (0.0, STRIDE),
        };
        let nx = (self.x + dx + gaussian(&mut self.rng, self.noise.transition)).clamp(0.0, 1.0);
        let ny = (self.y + dy + gaussian(&mut self.rng, self.noise.transition)).clamp(0.0, 1.0);
        if self.map.is_free(nx, ny) {
            self.x = nx;
            self.y = ny;
        }
        Ok(self.state())
    }

    fn render(&mut self) -> Observation {
        let canvas = self.draw(self.x, self.y);
        canvas.finish(self.noise.observation, &mut self.rng)
    }

    fn state(&self) -> Vec<f64> {
        vec![self.x, self.y]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        match state {
            [x, y] if self.map.is_free(*x, *y) => {
                self.x = *x;
                self.y = *y;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("illegal warehouse position {state:?}"))),
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

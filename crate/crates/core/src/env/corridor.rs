//! T-maze with perceptual aliasing.
//!
//! The first cell shows a colored cue. Every corridor cell after it looks the
//! same, and the junction at the end looks the same whichever cue was shown,
//! yet the correct turn at the junction depends on the cue. An agent that
//! maps the current frame straight to an action can do no better than chance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::raster::Canvas;
use super::{discrete_index, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::types::{ActionSpace, ActionVector, FrameDims, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct AliasedCorridor {
    corridor_len: usize,
    pos: usize,
    cue: Cue,
    outcome: Option<bool>,
    dims: FrameDims,
}

impl AliasedCorridor {
    /// Actions in order: forward, left, right.
    pub const ACTIONS: [&'static str; 3] = ["forward", "left", "right"];

    pub fn new(corridor_len: usize) -> Self {
        Self {
            corridor_len,
            pos: 0,
            cue: Cue::Left,
            outcome: None,
            dims: FrameDims::new(8, 4, 3),
        }
    }

    pub fn cue(&self) -> Cue {
        self.cue
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn junction(&self) -> usize {
        self.corridor_len + 1
    }

    /// `Some(true)` once the agent turned the cued way at the junction.
    pub fn outcome(&self) -> Option<bool> {
        self.outcome
    }

    pub fn succeeded(&self) -> bool {
        self.outcome == Some(true)
    }

    /// The action an oracle that knows the cue would take.
    pub fn oracle_action(&self) -> usize {
        if self.pos < self.junction() {
            0
        } else {
            match self.cue {
                Cue::Left => 1,
                Cue::Right => 2,
            }
        }
    }
}

impl Environment for AliasedCorridor {
    fn kind(&self) -> EnvKind {
        EnvKind::AliasedCorridor
    }

    /// Even seeds cue left, odd seeds cue right.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.cue = if seed.is_multiple_of(2) { Cue::Left } else { Cue::Right };
        self.pos = 0;
        self.outcome = None;
        self.state()
    }

    fn step(&mut self, action: &ActionVector) -> Result<Vec<f64>> {
        let a = discrete_index(action, 3)?;
        if self.outcome.is_some() {
            return Ok(self.state());
        }
        if self.pos < self.junction() {
            if a == 0 {
                self.pos += 1;
            }
        } else if a != 0 {
            let turned = if a == 1 { Cue::Left } else { Cue::Right };
            self.outcome = Some(turned == self.cue);
        }
        Ok(self.state())
    }

    fn render(&mut self) -> Observation {
        let gray = [0.5, 0.5, 0.5];
        let canvas = if self.outcome.is_some() {
            Canvas::new(self.dims, &[0.0, 0.0, 0.0])
        } else if self.pos == 0 {
            let color = match self.cue {
                Cue::Left => [0.9, 0.1, 0.1],
                Cue::Right => [0.1, 0.1, 0.9],
            };
            Canvas::new(self.dims, &color)
        } else if self.pos < self.junction() {
            Canvas::new(self.dims, &gray)
        } else {
            let mut c = Canvas::new(self.dims, &gray);
            c.rect(-4.0, -4.0, 12.0, 2.0, &[0.1, 0.1, 0.1]);
            c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        canvas.finish(0.0, &mut rng)
    }

    fn state(&self) -> Vec<f64> {
        let cue = match self.cue {
            Cue::Left => -1.0,
            Cue::Right => 1.0,
        };
        let outcome = match self.outcome {
            None => 0.0,
            Some(true) => 1.0,
            Some(false) => -1.0,
        };
        vec![self.pos as f64, cue, outcome]
    }

    fn set_state(&mut self, state: &[f64]) -> Result<()> {
        match state {
            [pos, cue, ..] if *pos >= 0.0 && (*pos as usize) <= self.junction() => {
                self.pos = *pos as usize;
                self.cue = if *cue < 0.0 { Cue::Left } else { Cue::Right };
                self.outcome = None;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("illegal corridor state {state:?}"))),
        }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 3 }
    }

    fn frame_dims(&self) -> FrameDims {
        self.dims
    }

    fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

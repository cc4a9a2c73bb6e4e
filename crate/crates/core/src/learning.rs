//! The learning system: transition model `f`, per-pixel decoder `g` and the
//! optional encoder `g_plus`, together with encoder-free belief inference.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::Approximator;
use crate::error::{Error, Result};
use crate::types::{ActionVector, BeliefVector, FrameDims, Observation};

/// Area-averaging factor applied to frames before they reach the encoder.
pub const ENCODER_DOWNSAMPLE: usize = 4;

/// Hidden-layer widths for the three learning-system models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Topology {
    pub transition_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// `None` builds an encoder-free system.
    pub encoder_hidden: Option<Vec<usize>>,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            transition_hidden: vec![32],
            decoder_hidden: vec![64, 64],
            encoder_hidden: Some(vec![32]),
        }
    }
}

/// Dimensions shared by every component of a learning system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub belief_dims: usize,
    pub action_dims: usize,
    pub frame: FrameDims,
    /// Non-visual percepts appended to each observation (introspection).
    #[serde(default)]
    pub aux_dims: usize,
}

impl SystemDims {
    pub fn encoder_input_len(&self) -> usize {
        self.frame.downsampled(ENCODER_DOWNSAMPLE).len() + self.aux_dims
    }
}

fn layers(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

/// Options for gradient-based belief inference through the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub steps: usize,
    pub rate: f64,
    /// Pixels in the random subsample that defines the objective.
    pub sample_pixels: usize,
    pub seed: u64,
}

impl RefineOptions {
    pub fn new(steps: usize, rate: f64) -> Self {
        Self {
            steps,
            rate,
            sample_pixels: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningSystem {
    pub f: Approximator,
    pub g: Approximator,
    pub g_plus: Option<Approximator>,
    dims: SystemDims,
}

impl LearningSystem {
    /// Fresh randomly initialised models.
    pub fn new(dims: SystemDims, topology: &Topology, seed: u64) -> Result<Self> {
        let d = dims.belief_dims;
        if d == 0 || dims.action_dims == 0 || dims.frame.is_empty() {
            return Err(Error::InvalidTopology(format!("degenerate system dims {dims:?}")));
        }
        let f = Approximator::new(
            &layers(d + dims.action_dims, &topology.transition_hidden, d),
            seed,
        )?;
        let g = Approximator::new(
            &layers(d + 2, &topology.decoder_hidden, dims.frame.channels),
            seed.wrapping_add(1),
        )?;
        let g_plus = topology
            .encoder_hidden
            .as_ref()
            .map(|hidden| {
                Approximator::new(
                    &layers(dims.encoder_input_len(), hidden, d),
                    seed.wrapping_add(2),
                )
            })
            .transpose()?;
        Ok(Self { f, g, g_plus, dims })
    }

    /// Assembles a system from existing models, checking that they agree.
    pub fn from_parts(
        f: Approximator,
        g: Approximator,
        g_plus: Option<Approximator>,
        dims: SystemDims,
    ) -> Result<Self> {
        let d = dims.belief_dims;
        if f.input_len() != d + dims.action_dims {
            return Err(Error::shape("transition input", d + dims.action_dims, f.input_len()));
        }
        if f.output_len() != d {
            return Err(Error::shape("transition output", d, f.output_len()));
        }
        if g.input_len() != d + 2 {
            return Err(Error::shape("decoder input", d + 2, g.input_len()));
        }
        if g.output_len() != dims.frame.channels {
            return Err(Error::shape("decoder output", dims.frame.channels, g.output_len()));
        }
        if let Some(enc) = &g_plus {
            if enc.input_len() != dims.encoder_input_len() {
                return Err(Error::shape("encoder input", dims.encoder_input_len(), enc.input_len()));
            }
            if enc.output_len() != d {
                return Err(Error::shape("encoder output", d, enc.output_len()));
            }
        }
        Ok(Self { f, g, g_plus, dims })
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn belief_dims(&self) -> usize {
        self.dims.belief_dims
    }

    pub fn action_dims(&self) -> usize {
        self.dims.action_dims
    }

    pub fn frame(&self) -> FrameDims {
        self.dims.frame
    }

    fn check_belief(&self, v: &BeliefVector) -> Result<()> {
        if v.len() != self.dims.belief_dims {
            return Err(Error::shape("belief", self.dims.belief_dims, v.len()));
        }
        Ok(())
    }

    pub fn predict_transition(&self, v: &BeliefVector, u: &ActionVector) -> Result<BeliefVector> {
        self.check_belief(v)?;
        if u.len() != self.dims.action_dims {
            return Err(Error::shape("action", self.dims.action_dims, u.len()));
        }
        let mut input = Vec::with_capacity(v.len() + u.len());
        input.extend_from_slice(v);
        input.extend_from_slice(u);
        BeliefVector::new(self.f.forward(&input)?)
    }

    pub fn decode_pixel(&self, v: &BeliefVector, px: f64, py: f64) -> Result<Vec<f64>> {
        self.check_belief(v)?;
        if !(0.0..=1.0).contains(&px) || !(0.0..=1.0).contains(&py) {
            return Err(Error::InvalidArgument(format!(
                "pixel coordinates ({px}, {py}) outside [0, 1]"
            )));
        }
        let mut out = self.g.forward(&decoder_input(v, px, py))?;
        out.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
        Ok(out)
    }

    /// Anticipated observation for belief `v`, decoded one pixel at a time.
    pub fn decode_frame(&self, v: &BeliefVector) -> Result<Observation> {
        self.check_belief(v)?;
        let dims = self.dims.frame;
        let rows: Vec<Vec<f64>> = (0..dims.height)
            .into_par_iter()
            .map(|j| {
                let mut row = Vec::with_capacity(dims.width * dims.channels);
                for i in 0..dims.width {
                    let (px, py) = dims.pixel_center(i, j);
                    row.extend(self.decode_pixel(v, px, py)?);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Observation {
            dims,
            pixels: rows.concat(),
            aux: Vec::new(),
        })
    }

    fn check_observation(&self, x: &Observation) -> Result<()> {
        if x.dims != self.dims.frame {
            return Err(Error::shape("observation", self.dims.frame.len(), x.dims.len()));
        }
        if x.aux.len() != self.dims.aux_dims {
            return Err(Error::shape("auxiliary percepts", self.dims.aux_dims, x.aux.len()));
        }
        Ok(())
    }

    /// Encoder input: downsampled pixels followed by auxiliary percepts.
    pub fn encoder_input(&self, x: &Observation) -> Result<Vec<f64>> {
        self.check_observation(x)?;
        Ok(x.downsample(ENCODER_DOWNSAMPLE).flat())
    }

    pub fn encode(&self, x: &Observation) -> Result<BeliefVector> {
        let enc = self.g_plus.as_ref().ok_or(Error::EncoderAbsent)?;
        BeliefVector::new(enc.forward(&self.encoder_input(x)?)?)
    }

    /// Mean squared pixel error between `decode_frame(v)` and `x`.
    pub fn reconstruction_error(&self, v: &BeliefVector, x: &Observation) -> Result<f64> {
        let x_hat = self.decode_frame(v)?;
        let n = x.pixels.len().max(1) as f64;
        Ok(error_signal_pixels(x, &x_hat)?
            .iter()
            .map(|e| e * e)
            .sum::<f64>()
            / n)
    }

    /// Encoder-free inference: adjusts `v_init` so the decoded frame matches `x`.
    pub fn refine_beliefs(
        &self,
        v_init: &BeliefVector,
        x: &Observation,
        steps: usize,
        rate: f64,
    ) -> Result<BeliefVector> {
        self.refine_beliefs_with(v_init, x, &RefineOptions::new(steps, rate))
    }

    /// Gradient descent on the squared error over random pixel subsamples,
    /// drawn afresh each step from a generator seeded once per call. A step
    /// that raises the objective on its own subsample is undone and the rate
    /// halved, so no accepted step increases the objective it was tested on.
    pub fn refine_beliefs_with(
        &self,
        v_init: &BeliefVector,
        x: &Observation,
        opts: &RefineOptions,
    ) -> Result<BeliefVector> {
        self.check_belief(v_init)?;
        if x.dims != self.dims.frame {
            return Err(Error::shape("observation", self.dims.frame.len(), x.dims.len()));
        }
        if opts.steps == 0 {
            return Err(Error::InvalidArgument("refine_beliefs needs steps >= 1".into()));
        }
        if !(opts.rate > 0.0 && opts.rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate must be positive, got {}", opts.rate)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut v = v_init.as_slice().to_vec();
        let mut rate = opts.rate;
        for _ in 0..opts.steps {
            let objective = SubsampleObjective::new(self, x, opts.sample_pixels, &mut rng);
            let (current, grad) = objective.value_and_gradient(&v)?;
            if grad.iter().all(|g| *g == 0.0) {
                continue;
            }
            let candidate: Vec<f64> = v
                .iter()
                .zip(&grad)
                .map(|(vi, gi)| (vi - rate * gi).clamp(-1.0, 1.0))
                .collect();
            let (value, _) = objective.value_and_gradient(&candidate)?;
            if !value.is_finite() {
                return Err(Error::Diverged("belief refinement objective".into()));
            }
            if value <= current {
                v = candidate;
            } else {
                rate *= 0.5;
            }
        }
        BeliefVector::new(v)
    }

    /// Beliefs after each action of `plan`, starting from `v0`.
    pub fn rollout(&self, v0: &BeliefVector, plan: &[ActionVector]) -> Result<Vec<BeliefVector>> {
        if plan.is_empty() {
            return Err(Error::InvalidArgument("rollout needs a non-empty plan".into()));
        }
        let mut out = Vec::with_capacity(plan.len());
        let mut v = v0.clone();
        for u in plan {
            v = self.predict_transition(&v, u)?;
            out.push(v.clone());
        }
        Ok(out)
    }

    /// Decoded frames along the rollout of `plan`.
    pub fn imagine_video(&self, v0: &BeliefVector, plan: &[ActionVector]) -> Result<Vec<Observation>> {
        self.rollout(v0, plan)?
            .iter()
            .map(|v| self.decode_frame(v))
            .collect()
    }

    /// Model files `f.mncm`, `g.mncm`, optional `gplus.mncm` and `system.json`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.f.save(dir.join("f.mncm"))?;
        self.g.save(dir.join("g.mncm"))?;
        let enc_path = dir.join("gplus.mncm");
        match &self.g_plus {
            Some(enc) => enc.save(&enc_path)?,
            None if enc_path.exists() => fs::remove_file(&enc_path)?,
            None => {}
        }
        fs::write(dir.join("system.json"), serde_json::to_string_pretty(&self.dims)?)?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let dims: SystemDims = serde_json::from_str(&fs::read_to_string(dir.join("system.json"))?)?;
        let f = Approximator::load(dir.join("f.mncm"))?;
        let g = Approximator::load(dir.join("g.mncm"))?;
        let enc_path = dir.join("gplus.mncm");
        let g_plus = if enc_path.exists() {
            Some(Approximator::load(enc_path)?)
        } else {
            None
        };
        Self::from_parts(f, g, g_plus, dims)
    }
}

pub(crate) fn decoder_input(v: &[f64], px: f64, py: f64) -> Vec<f64> {
    let mut input = Vec::with_capacity(v.len() + 2);
    input.extend_from_slice(v);
    input.push(px);
    input.push(py);
    input
}

/// Squared decoder error summed over a fixed pixel subsample.
struct SubsampleObjective<'a> {
    ls: &'a LearningSystem,
    samples: Vec<(f64, f64, &'a [f64])>,
}

impl<'a> SubsampleObjective<'a> {
    fn new(ls: &'a LearningSystem, x: &'a Observation, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let dims = x.dims;
        let total = dims.pixel_count();
        let mut indices: Vec<usize> = if count >= total {
            (0..total).collect()
        } else {
            sample(rng, total, count).into_vec()
        };
        indices.sort_unstable();
        let samples = indices
            .into_iter()
            .map(|k| {
                let (i, j) = (k % dims.width, k / dims.width);
                let (px, py) = dims.pixel_center(i, j);
                (px, py, x.pixel(i, j))
            })
            .collect();
        Self { ls, samples }
    }

    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = v.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        for &(px, py, target) in &self.samples {
            let input = decoder_input(v, px, py);
            let out = self.ls.g.forward(&input)?;
            // error of the clamped prediction; saturated channels pass no gradient
            let out_grad: Vec<f64> = out
                .iter()
                .zip(target)
                .map(|(y, t)| {
                    let e = y.clamp(0.0, 1.0) - t;
                    value += e * e;
                    if (0.0..=1.0).contains(y) {
                        2.0 * e
                    } else {
                        0.0
                    }
                })
                .collect();
            if out_grad.iter().any(|g| *g != 0.0) {
                let g = self.ls.g.gradients(&input, &out_grad)?;
                grad.iter_mut().zip(&g.input[..d]).for_each(|(a, b)| *a += b);
            }
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("belief refinement gradient".into()));
        }
        Ok((value, grad))
    }
}

/// Elementwise `x - x_hat` over the full flattened observations.
pub fn error_signal(x: &Observation, x_hat: &Observation) -> Result<Vec<f64>> {
    let (a, b) = (x.flat(), x_hat.flat());
    if a.len() != b.len() {
        return Err(Error::shape("error signal", a.len(), b.len()));
    }
    Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
}

/// Elementwise `x - x_hat` over pixels only, ignoring auxiliary percepts.
pub fn error_signal_pixels(x: &Observation, x_hat: &Observation) -> Result<Vec<f64>> {
    if x.pixels.len() != x_hat.pixels.len() {
        return Err(Error::shape("error signal", x.pixels.len(), x_hat.pixels.len()));
    }
    Ok(x.pixels.iter().zip(&x_hat.pixels).map(|(p, q)| p - q).collect())
}

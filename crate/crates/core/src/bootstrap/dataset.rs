//! Random-walk datasets and belief-estimate files.
//!
//! Dataset (`MNC1`, little-endian):
//!
//! ```text
//! "MNC1" | u32 version | u32 T | u32 W | u32 H | u32 C | u32 a_dims
//!        | u8 flags (bit0: true states present) | u32 state_dims
//!        | T frames f32 | T-1 actions f32 | [T states f32]
//! ```
//!
//! Belief estimates (`MNCB`): `"MNCB" | u32 version | u32 T | u32 d | T*d f64`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::approximator::ByteReader;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::types::{ActionVector, FrameDims, Observation};

const DATASET_MAGIC: &[u8; 4] = b"MNC1";
const BELIEFS_MAGIC: &[u8; 4] = b"MNCB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkDataset {
    pub observations: Vec<Observation>,
    /// `actions[k]` moved the world from frame `k` to frame `k + 1`.
    pub actions: Vec<ActionVector>,
    /// Ground truth for evaluation only.
    pub true_states: Option<Vec<Vec<f64>>>,
    pub frame: FrameDims,
    pub action_dims: usize,
    pub seed: u64,
}

impl WalkDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Frames available for training; the last `holdout` fraction is excluded.
    pub fn train_len(&self, holdout: f64) -> usize {
        let t = self.len();
        let held = (t as f64 * holdout.clamp(0.0, 1.0)).floor() as usize;
        (t - held).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.len() != self.actions.len() + 1 {
            return Err(Error::Format(format!(
                "{} observations but {} actions",
                self.observations.len(),
                self.actions.len()
            )));
        }
        if let Some(states) = &self.true_states {
            if states.len() != self.observations.len() {
                return Err(Error::Format("true states not aligned with frames".into()));
            }
        }
        if self.observations.iter().any(|o| o.dims != self.frame) {
            return Err(Error::Format("frame dims differ within dataset".into()));
        }
        if self.actions.iter().any(|a| a.len() != self.action_dims) {
            return Err(Error::Format("action dims differ within dataset".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let state_dims = self
            .true_states
            .as_ref()
            .and_then(|s| s.first())
            .map_or(0, Vec::len);
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        for v in [
            VERSION,
            self.len() as u32,
            self.frame.width as u32,
            self.frame.height as u32,
            self.frame.channels as u32,
            self.action_dims as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(self.true_states.is_some()));
        out.extend_from_slice(&(state_dims as u32).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        self.observations.iter().flat_map(|o| &o.pixels).for_each(|&v| put(v));
        self.actions.iter().flat_map(|a| a.iter()).for_each(|&v| put(v));
        if let Some(states) = &self.true_states {
            states.iter().flatten().for_each(|&v| put(v));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let t = r.u32()? as usize;
        let frame = FrameDims::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let action_dims = r.u32()? as usize;
        let flags = r.u8()?;
        let state_dims = r.u32()? as usize;
        if t == 0 {
            return Err(Error::Format("empty dataset".into()));
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            (0..n).map(|_| r.f32().map(f64::from)).collect()
        };
        let mut observations = Vec::with_capacity(t);
        for _ in 0..t {
            let pixels = read_vec(frame.len())?;
            observations.push(Observation {
                dims: frame,
                pixels,
                aux: Vec::new(),
            });
        }
        let actions = (0..t - 1)
            .map(|_| read_vec(action_dims).map(ActionVector::new))
            .collect::<Result<Vec<_>>>()?;
        let true_states = if flags & 1 == 1 {
            Some((0..t).map(|_| read_vec(state_dims)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        let ds = Self {
            observations,
            actions,
            true_states,
            frame,
            action_dims,
            seed: 0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Drops the ground truth, leaving only what an agent could see.
    pub fn without_true_states(&self) -> Self {
        Self {
            true_states: None,
            ..self.clone()
        }
    }
}

/// Random walk with uniformly drawn actions. The environment is reset with
/// `seed`, so the whole dataset (noise included) is reproducible.
pub fn collect_random_walk(env: &mut dyn Environment, steps: usize, seed: u64) -> Result<WalkDataset> {
    collect_held_walk(env, steps, seed, 1)
}

/// Random walk that repeats each uniformly drawn action for `hold` steps.
/// Covers a large state space in fewer frames than a plain walk; `hold = 1`
/// is exactly [`collect_random_walk`].
pub fn collect_held_walk(env: &mut dyn Environment, steps: usize, seed: u64, hold: usize) -> Result<WalkDataset> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "a random walk needs at least 2 steps, got {steps}"
        )));
    }
    if hold == 0 {
        return Err(Error::InvalidArgument("action hold must be >= 1".into()));
    }
    let space = env.action_space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    env.reset(seed);
    let mut observations = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps - 1);
    let mut states = Vec::with_capacity(steps);
    observations.push(env.render());
    states.push(env.state());
    let mut u = space.sample(&mut rng);
    for t in 1..steps {
        if t > 1 && (t - 1) % hold == 0 {
            u = space.sample(&mut rng);
        }
        env.step(&u)?;
        observations.push(env.render());
        states.push(env.state());
        actions.push(u.clone());
    }
    Ok(WalkDataset {
        observations,
        actions,
        true_states: Some(states),
        frame: env.frame_dims(),
        action_dims: space.dims(),
        seed,
    })
}

/// Initial belief estimates, one per dataset frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefEstimates {
    pub beliefs: Vec<Vec<f64>>,
    pub dims: usize,
}

impl BeliefEstimates {
    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.len() * self.dims);
        out.extend_from_slice(BELIEFS_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for v in self.beliefs.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != BELIEFS_MAGIC {
            return Err(Error::Format("bad belief file magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported belief file version {version}")));
        }
        let t = r.u32()? as usize;
        let d = r.u32()? as usize;
        let beliefs = (0..t)
            .map(|_| (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after beliefs".into()));
        }
        Ok(Self { beliefs, dims: d })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Crane, NoiseConfig, Ramp};

    #[test]
    fn minimal_walk_lengths() {
        let mut env = Crane::new(NoiseConfig::default());
        let ds = collect_random_walk(&mut env, 2, 0).unwrap();
        assert_eq!(ds.observations.len(), 2);
        assert_eq!(ds.actions.len(), 1);
        assert!(collect_random_walk(&mut env, 1, 0).is_err());
    }

    #[test]
    fn walk_is_reproducible() {
        let mut env = Crane::new(NoiseConfig::default());
        let a = collect_random_walk(&mut env, 20, 3).unwrap();
        let b = collect_random_walk(&mut env, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn crane_action_histogram_is_uniform() {
        let mut env = Crane::new(NoiseConfig::default());
        let ds = collect_random_walk(&mut env, 1001, 11).unwrap();
        let mut counts = [0usize; 4];
        for a in &ds.actions {
            counts[a.argmax()] += 1;
        }
        for c in counts {
            assert!((200..=300).contains(&c), "counts {counts:?}");
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let mut env = Ramp::new(NoiseConfig::NONE);
        let ds = collect_random_walk(&mut env, 6, 2).unwrap();
        let back = WalkDataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back.frame, ds.frame);
        for (a, b) in back.observations.iter().zip(&ds.observations) {
            for (x, y) in a.pixels.iter().zip(&b.pixels) {
                assert_eq!(*x, (*y as f32) as f64);
            }
        }
        assert!(back.true_states.is_some());
        let stripped = WalkDataset::from_bytes(&ds.without_true_states().to_bytes()).unwrap();
        assert!(stripped.true_states.is_none());
    }

    #[test]
    fn dataset_header_layout() {
        let mut env = Ramp::new(NoiseConfig::NONE);
        let ds = collect_random_walk(&mut env, 3, 0).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"MNC1");
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        assert_eq!([word(0), word(1), word(2), word(3), word(4), word(5)], [1, 3, 8, 8, 1, 2]);
        assert_eq!(bytes[28], 1);
        assert_eq!(u32::from_le_bytes(bytes[29..33].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 33 + 4 * (3 * 64 + 2 * 2 + 3));
    }

    #[test]
    fn beliefs_file_round_trip() {
        let be = BeliefEstimates {
            beliefs: vec![vec![0.1, -0.2], vec![1.0, -1.0]],
            dims: 2,
        };
        let back = BeliefEstimates::from_bytes(&be.to_bytes()).unwrap();
        assert_eq!(be, back);
        assert!(BeliefEstimates::from_bytes(b"MNCBxx").is_err());
    }
}

//! Vectors exchanged between the agent and its world.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width, height and channel count of a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl FrameDims {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Normalized coordinates of the center of pixel `(i, j)` (column, row).
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 + 0.5) / self.width as f64,
            (j as f64 + 0.5) / self.height as f64,
        )
    }

    /// Dimensions after area-averaging by `factor` (partial edge blocks kept).
    pub fn downsampled(&self, factor: usize) -> FrameDims {
        FrameDims::new(
            self.width.div_ceil(factor),
            self.height.div_ceil(factor),
            self.channels,
        )
    }
}

/// A camera frame: row-major, channel-interleaved values in `[0, 1]`.
///
/// `aux` holds extra non-visual percepts appended after the pixels (used for
/// introspective observation); it is empty for plain camera frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dims: FrameDims,
    pub pixels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux: Vec<f64>,
}

impl Observation {
    pub fn new(dims: FrameDims, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != dims.len() {
            return Err(Error::shape("observation pixels", dims.len(), pixels.len()));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "observation values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            dims,
            pixels,
            aux: Vec::new(),
        })
    }

    pub fn filled(dims: FrameDims, value: f64) -> Self {
        Self {
            dims,
            pixels: vec![value.clamp(0.0, 1.0); dims.len()],
            aux: Vec::new(),
        }
    }

    /// Total length including auxiliary percepts.
    pub fn len(&self) -> usize {
        self.pixels.len() + self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels followed by auxiliary entries.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.pixels);
        v.extend_from_slice(&self.aux);
        v
    }

    /// Channel values of pixel `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let c = self.dims.channels;
        let start = (j * self.dims.width + i) * c;
        &self.pixels[start..start + c]
    }

    /// Area-average downsampling by `factor` in both directions.
    pub fn downsample(&self, factor: usize) -> Observation {
        let factor = factor.max(1);
        let src = self.dims;
        let dst = src.downsampled(factor);
        let c = src.channels;
        let mut pixels = vec![0.0; dst.len()];
        for dj in 0..dst.height {
            for di in 0..dst.width {
                let (j0, j1) = (dj * factor, ((dj + 1) * factor).min(src.height));
                let (i0, i1) = (di * factor, ((di + 1) * factor).min(src.width));
                let count = ((j1 - j0) * (i1 - i0)) as f64;
                let out = &mut pixels[(dj * dst.width + di) * c..][..c];
                for j in j0..j1 {
                    for i in i0..i1 {
                        for (o, v) in out.iter_mut().zip(self.pixel(i, j)) {
                            *o += v;
                        }
                    }
                }
                out.iter_mut().for_each(|o| *o /= count);
            }
        }
        Observation {
            dims: dst,
            pixels,
            aux: self.aux.clone(),
        }
    }

    pub fn mean_abs_diff(&self, other: &Observation) -> Result<f64> {
        if self.pixels.len() != other.pixels.len() {
            return Err(Error::shape("observation comparison", self.pixels.len(), other.pixels.len()));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.pixels.len().max(1) as f64)
    }
}

/// The agent's internal state estimate; every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    /// Clamps into `[-1, 1]`; non-finite entries are rejected.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief vector"));
        }
        Ok(Self(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for BeliefVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An action; one-hot for discrete action sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVector(Vec<f64>);

impl ActionVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ActionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the maximum value, lowest index on ties. Empty input gives 0.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Describes the legal actions of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn dims(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Number of distinct actions for discrete spaces.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ActionSpace::Discrete { n } => Some(*n),
            ActionSpace::Continuous { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionVector {
        match self {
            ActionSpace::Discrete { n } => ActionVector::one_hot(*n, rng.random_range(0..*n)),
            ActionSpace::Continuous { low, high } => ActionVector::new(
                low.iter()
                    .zip(high)
                    .map(|(l, h)| if h > l { rng.random_range(*l..=*h) } else { *l })
                    .collect(),
            ),
        }
    }

    pub fn validate(&self, action: &ActionVector) -> Result<()> {
        match self {
            ActionSpace::Discrete { n } => {
                if action.len() != *n {
                    return Err(Error::shape("discrete action", *n, action.len()));
                }
                let ones = action.iter().filter(|&&v| v == 1.0).count();
                let zeros = action.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != *n {
                    return Err(Error::InvalidArgument(format!(
                        "discrete action must be one-hot: {:?}",
                        action.as_slice()
                    )));
                }
            }
            ActionSpace::Continuous { low, high } => {
                if action.len() != low.len() {
                    return Err(Error::shape("continuous action", low.len(), action.len()));
                }
                let inside = action
                    .iter()
                    .zip(low.iter().zip(high))
                    .all(|(a, (l, h))| a.is_finite() && *a >= *l && *a <= *h);
                if !inside {
                    return Err(Error::InvalidArgument("continuous action out of bounds".into()));
                }
            }
        }
        Ok(())
    }
}

//! Fully-connected function approximator.
//!
//! Every learned mapping in the agent (transition, decoder, encoder and
//! contentment) is an instance of [`Approximator`]: a multilayer perceptron
//! with `tanh` hidden units and a linear output layer, trained by plain
//! stochastic gradient descent on `0.5 * ||target - output||^2`.
//!
//! Weights are stored row-major per layer (`out x in`). The binary model file
//! is little-endian:
//!
//! ```text
//! "MNCM" | u32 version=1 | u32 layer_count | u32 size * layer_count
//!        | per layer: f64 weights (row-major) then f64 biases
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"MNCM";
const MODEL_VERSION: u32 = 1;

/// A feed-forward network with `tanh` hidden layers and an identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximator {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default)]
    rng_seed: u64,
}

/// Gradient of some scalar objective with respect to parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Gradients {
    /// All-zero gradients shaped like `net`.
    pub fn zeros(net: &Approximator) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: vec![0.0; net.input_len()],
        }
    }

    /// Flattens parameter gradients in the same order as [`Approximator::params`].
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        self.input
            .iter_mut()
            .zip(&other.input)
            .for_each(|(x, y)| *x += scale * y);
    }
}

fn validate_topology(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidTopology(format!(
            "need at least 2 layers, got {}",
            layer_sizes.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidTopology(format!(
            "layer sizes must be positive: {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Approximator {
    /// Builds a network with weights uniform in `±1/sqrt(fan_in)` and zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_topology(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let r = 1.0 / (fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-r..=r))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            rng_seed: seed,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_topology(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|p| vec![0.0; p[0] * p[1]])
                .collect(),
            biases: layer_sizes.windows(2).map(|p| vec![0.0; p[1]]).collect(),
            rng_seed: 0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().expect("validated topology")
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Row-major `out x in` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.biases[l]
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Flat parameter vector: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("set_params", self.param_count(), params.len()));
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (wn, bn) = (w.len(), b.len());
            w.copy_from_slice(&params[offset..offset + wn]);
            offset += wn;
            b.copy_from_slice(&params[offset..offset + bn]);
            offset += bn;
        }
        Ok(())
    }

    fn locate(&self, mut index: usize) -> Option<(usize, bool, usize)> {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if index < w.len() {
                return Some((l, true, index));
            }
            index -= w.len();
            if index < b.len() {
                return Some((l, false, index));
            }
            index -= b.len();
        }
        None
    }

    /// Parameter at a flat index (same ordering as [`params`](Self::params)).
    pub fn param(&self, index: usize) -> Option<f64> {
        self.locate(index).map(|(l, is_w, i)| {
            if is_w {
                self.weights[l][i]
            } else {
                self.biases[l][i]
            }
        })
    }

    pub fn set_param(&mut self, index: usize, value: f64) -> Result<()> {
        let (l, is_w, i) = self
            .locate(index)
            .ok_or_else(|| Error::shape("set_param", self.param_count(), index))?;
        if is_w {
            self.weights[l][i] = value;
        } else {
            self.biases[l][i] = value;
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::shape("approximator input", self.input_len(), input.len()));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("approximator input"));
        }
        Ok(())
    }

    /// Activations of every layer, input first, output last.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(input.to_vec());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let x = &acts[l];
            let fan_in = x.len();
            let mut out = b.clone();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(fan_in)) {
                *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).pop().expect("at least one layer"))
    }

    /// Backpropagates `output_grad` (dE/d output) through the network.
    fn backward(&self, acts: &[Vec<f64>], output_grad: &[f64]) -> Gradients {
        let n = self.weights.len();
        let mut weights = vec![Vec::new(); n];
        let mut biases = vec![Vec::new(); n];
        let mut delta = output_grad.to_vec();
        for l in (0..n).rev() {
            let x = &acts[l];
            let fan_in = x.len();
            let mut gw = vec![0.0; self.weights[l].len()];
            for (row, d) in gw.chunks_exact_mut(fan_in).zip(&delta) {
                row.iter_mut().zip(x).for_each(|(g, xi)| *g = d * xi);
            }
            let mut prev = vec![0.0; fan_in];
            for (row, d) in self.weights[l].chunks_exact(fan_in).zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            if l > 0 {
                // x = tanh(z) for hidden layers
                prev.iter_mut()
                    .zip(x)
                    .for_each(|(p, a)| *p *= 1.0 - a * a);
            }
            weights[l] = gw;
            biases[l] = delta;
            delta = prev;
        }
        Gradients {
            weights,
            biases,
            input: delta,
        }
    }

    /// Gradients of an arbitrary objective given `dE/d output` at `input`.
    pub fn gradients(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        self.check_input(input)?;
        if output_grad.len() != self.output_len() {
            return Err(Error::shape("output gradient", self.output_len(), output_grad.len()));
        }
        let acts = self.activations(input);
        Ok(self.backward(&acts, output_grad))
    }

    /// Squared-error loss `0.5 * ||target - forward(input)||^2` and its gradients.
    pub fn loss_gradients(&self, input: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
        self.check_input(input)?;
        if target.len() != self.output_len() {
            return Err(Error::shape("target", self.output_len(), target.len()));
        }
        let acts = self.activations(input);
        let out = acts.last().expect("output layer");
        let err: Vec<f64> = out.iter().zip(target).map(|(y, t)| y - t).collect();
        let loss = 0.5 * err.iter().map(|e| e * e).sum::<f64>();
        Ok((loss, self.backward(&acts, &err)))
    }

    /// `params -= rate * grads`. Refuses non-finite updates.
    pub fn apply_gradients(&mut self, grads: &Gradients, rate: f64) -> Result<()> {
        let finite = grads
            .weights
            .iter()
            .chain(&grads.biases)
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.iter_mut().zip(g).for_each(|(w, g)| *w -= rate * g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.iter_mut().zip(g).for_each(|(b, g)| *b -= rate * g);
        }
        Ok(())
    }

    /// One SGD step. Returns the loss measured before the update.
    pub fn train_step(&mut self, input: &[f64], target: &[f64], learning_rate: f64) -> Result<f64> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        self.check_input(input)?;
        if target.len() != self.output_len() {
            return Err(Error::shape("target", self.output_len(), target.len()));
        }
        let acts = self.activations(input);
        let out = acts.last().expect("output layer");
        let err: Vec<f64> = out.iter().zip(target).map(|(y, t)| y - t).collect();
        let loss = 0.5 * err.iter().map(|e| e * e).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("loss is {loss}")));
        }
        // Same update as loss_gradients + apply_gradients, without
        // materializing the weight gradients: collect every layer's delta
        // against the old weights, then update in place.
        let n = self.weights.len();
        let mut deltas = vec![Vec::new(); n];
        let mut delta = err;
        for l in (1..n).rev() {
            let x = &acts[l];
            let fan_in = x.len();
            let mut prev = vec![0.0; fan_in];
            for (row, d) in self.weights[l].chunks_exact(fan_in).zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            prev.iter_mut().zip(x).for_each(|(p, a)| *p *= 1.0 - a * a);
            deltas[l] = std::mem::replace(&mut delta, prev);
        }
        deltas[0] = delta;
        if !deltas.iter().all(|d| d.iter().all(|v| v.is_finite())) {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        for (l, delta) in deltas.iter().enumerate() {
            let x = &acts[l];
            let fan_in = x.len();
            for (row, d) in self.weights[l].chunks_exact_mut(fan_in).zip(delta) {
                row.iter_mut().zip(x).for_each(|(w, xi)| *w -= learning_rate * (d * xi));
            }
            self.biases[l].iter_mut().zip(delta).for_each(|(b, d)| *b -= learning_rate * d);
        }
        Ok(loss)
    }

    /// Gradient of the squared error with respect to the input vector.
    pub fn input_gradient(&self, input: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        Ok(self.loss_gradients(input, target)?.1.input)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.layer_sizes.len() + 8 * self.param_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = ByteReader::new(bytes);
        if cursor.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("bad model magic".into()));
        }
        let version = cursor.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let count = cursor.u32()? as usize;
        let sizes = (0..count)
            .map(|_| cursor.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&sizes)?;
        for l in 0..net.weights.len() {
            for w in net.weights[l].iter_mut() {
                *w = cursor.f64()?;
            }
            for b in net.biases[l].iter_mut() {
                *b = cursor.f64()?;
            }
        }
        if !cursor.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Debug export mirroring the binary fields.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(text)?;
        validate_topology(&net.layer_sizes)?;
        for (l, pair) in net.layer_sizes.windows(2).enumerate() {
            let ok = net.weights.get(l).map(Vec::len) == Some(pair[0] * pair[1])
                && net.biases.get(l).map(Vec::len) == Some(pair[1]);
            if !ok {
                return Err(Error::Format(format!("layer {l} has inconsistent shape")));
            }
        }
        Ok(net)
    }

    /// Hex SHA-256 of the binary form; identifies a parameter snapshot.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Little-endian reader over a byte slice.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

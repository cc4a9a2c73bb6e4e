//! Supervised training of the learning system from estimated beliefs.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{BeliefEstimates, WalkDataset};
use crate::approximator::Approximator;
use crate::error::{Error, Result};
use crate::learning::{decoder_input, LearningSystem, SystemDims, Topology, ENCODER_DOWNSAMPLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rate: f64,
    /// Multiplier applied to a model's rate whenever its epoch loss rises.
    pub rate_decay: f64,
    /// Decoder pixels sampled per frame per epoch.
    pub pixels_per_frame: usize,
    /// Trailing fraction of the walk withheld from training.
    pub holdout: f64,
    /// Frames used for the end-of-epoch full-frame decoder loss.
    pub probe_frames: usize,
    pub topology: Topology,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            rate: 0.01,
            rate_decay: 0.5,
            pixels_per_frame: 256,
            holdout: 0.1,
            probe_frames: 32,
            topology: Topology::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelLog {
    /// Mean per-sample training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Learning rate in effect at each epoch.
    pub epoch_rate: Vec<f64>,
}

impl ModelLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }

    pub fn final_rate(&self) -> Option<f64> {
        self.epoch_rate.last().copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub transition: ModelLog,
    pub decoder: ModelLog,
    /// Full-frame mean squared pixel error on probe frames, per epoch.
    pub decoder_frame_mse: Vec<f64>,
    pub encoder: Option<ModelLog>,
    pub train_frames: usize,
}

fn check_alignment(ds: &WalkDataset, be: &BeliefEstimates) -> Result<()> {
    ds.validate()?;
    if be.len() != ds.len() {
        return Err(Error::shape("belief estimates", ds.len(), be.len()));
    }
    if be.beliefs.iter().any(|b| b.len() != be.dims) {
        return Err(Error::Format("belief estimates have ragged rows".into()));
    }
    Ok(())
}

/// Trains fresh `f`, `g` and (optionally) `g_plus` on the walk. Ground-truth
/// states in the dataset are never read.
pub fn pretrain(ds: &WalkDataset, be: &BeliefEstimates, cfg: &TrainConfig) -> Result<(LearningSystem, TrainingLog)> {
    check_alignment(ds, be)?;
    let dims = SystemDims {
        belief_dims: be.dims,
        action_dims: ds.action_dims,
        frame: ds.frame,
        aux_dims: 0,
    };
    let mut ls = LearningSystem::new(dims, &cfg.topology, cfg.seed)?;
    let log = continue_training(&mut ls, ds, be, cfg)?;
    Ok((ls, log))
}

/// Further supervised epochs on an existing learning system.
pub fn continue_training(
    ls: &mut LearningSystem,
    ds: &WalkDataset,
    be: &BeliefEstimates,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    check_alignment(ds, be)?;
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("training needs epochs >= 1".into()));
    }
    if be.dims != ls.belief_dims() || ds.action_dims != ls.action_dims() || ds.frame != ls.frame() {
        return Err(Error::InvalidArgument(
            "dataset dimensions do not match the learning system".into(),
        ));
    }
    let n = ds.train_len(cfg.holdout);
    let schedule = Schedule {
        epochs: cfg.epochs,
        rate: cfg.rate,
        decay: cfg.rate_decay,
    };

    let transitions: Vec<(Vec<f64>, &[f64])> = (0..n.saturating_sub(1))
        .map(|t| {
            let mut input = be.beliefs[t].clone();
            input.extend_from_slice(&ds.actions[t]);
            (input, be.beliefs[t + 1].as_slice())
        })
        .collect();
    let encoder_inputs: Vec<Vec<f64>> = if ls.g_plus.is_some() {
        ds.observations[..n]
            .iter()
            .map(|o| o.downsample(ENCODER_DOWNSAMPLE).flat())
            .collect()
    } else {
        Vec::new()
    };

    let LearningSystem { f, g, g_plus, .. } = ls;
    let seed = cfg.seed;
    let ((f_log, g_result), enc_log) = rayon::join(
        || {
            rayon::join(
                || {
                    let pairs: Vec<(&[f64], &[f64])> =
                        transitions.iter().map(|(i, t)| (i.as_slice(), *t)).collect();
                    fit_pairs(f, &pairs, schedule, seed.wrapping_add(11))
                },
                || fit_decoder(g, ds, be, n, cfg, schedule),
            )
        },
        || {
            g_plus
                .as_mut()
                .map(|enc| {
                    let pairs: Vec<(&[f64], &[f64])> = encoder_inputs
                        .iter()
                        .zip(&be.beliefs[..n])
                        .map(|(x, v)| (x.as_slice(), v.as_slice()))
                        .collect();
                    fit_pairs(enc, &pairs, schedule, seed.wrapping_add(13))
                })
                .transpose()
        },
    );
    let (g_log, frame_mse) = g_result?;
    Ok(TrainingLog {
        transition: f_log?,
        decoder: g_log,
        decoder_frame_mse: frame_mse,
        encoder: enc_log?,
        train_frames: n,
    })
}

#[derive(Debug, Clone, Copy)]
struct Schedule {
    epochs: usize,
    rate: f64,
    decay: f64,
}

impl Schedule {
    fn update(&self, rate: f64, prev: Option<f64>, loss: f64) -> f64 {
        match prev {
            Some(p) if loss > p => rate * self.decay,
            _ => rate,
        }
    }
}

/// Shuffled SGD over input/target pairs.
fn fit_pairs(net: &mut Approximator, pairs: &[(&[f64], &[f64])], schedule: Schedule, seed: u64) -> Result<ModelLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = ModelLog::default();
    let mut rate = schedule.rate;
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += net.train_step(pairs[i].0, pairs[i].1, rate)?;
        }
        let loss = total / pairs.len().max(1) as f64;
        log.epoch_rate.push(rate);
        rate = schedule.update(rate, log.final_loss(), loss);
        log.epoch_loss.push(loss);
    }
    Ok(log)
}

fn fit_decoder(
    g: &mut Approximator,
    ds: &WalkDataset,
    be: &BeliefEstimates,
    n: usize,
    cfg: &TrainConfig,
    schedule: Schedule,
) -> Result<(ModelLog, Vec<f64>)> {
    let dims = ds.frame;
    let total_pixels = dims.pixel_count();
    let per_frame = cfg.pixels_per_frame.min(total_pixels).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(12));
    let mut order: Vec<usize> = (0..n).collect();
    let probe_count = cfg.probe_frames.clamp(1, n);
    let probes: Vec<usize> = (0..probe_count).map(|k| k * n / probe_count).collect();
    let mut log = ModelLog::default();
    let mut frame_mse = Vec::with_capacity(schedule.epochs);
    let mut rate = schedule.rate;
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &t in &order {
            let x = &ds.observations[t];
            let v = &be.beliefs[t];
            for k in sample(&mut rng, total_pixels, per_frame) {
                let (i, j) = (k % dims.width, k / dims.width);
                let (px, py) = dims.pixel_center(i, j);
                total += g.train_step(&decoder_input(v, px, py), x.pixel(i, j), rate)?;
                count += 1;
            }
        }
        let loss = total / count.max(1) as f64;
        log.epoch_rate.push(rate);
        rate = schedule.update(rate, log.final_loss(), loss);
        log.epoch_loss.push(loss);
        frame_mse.push(probe_frame_mse(g, ds, be, &probes)?);
    }
    Ok((log, frame_mse))
}

fn probe_frame_mse(g: &Approximator, ds: &WalkDataset, be: &BeliefEstimates, probes: &[usize]) -> Result<f64> {
    let dims = ds.frame;
    let mut total = 0.0;
    for &t in probes {
        let x = &ds.observations[t];
        for j in 0..dims.height {
            for i in 0..dims.width {
                let (px, py) = dims.pixel_center(i, j);
                let out = g.forward(&decoder_input(&be.beliefs[t], px, py))?;
                total += out
                    .iter()
                    .zip(x.pixel(i, j))
                    .map(|(y, p)| (y.clamp(0.0, 1.0) - p).powi(2))
                    .sum::<f64>();
            }
        }
    }
    Ok(total / (probes.len() * dims.len()).max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ActionVector, BeliefVector, FrameDims, Observation};

    fn constant_dataset(t: usize) -> (WalkDataset, BeliefEstimates) {
        let dims = FrameDims::new(4, 4, 3);
        let frame = Observation::filled(dims, 0.6);
        let ds = WalkDataset {
            observations: vec![frame; t],
            actions: vec![ActionVector::one_hot(2, 1); t - 1],
            true_states: None,
            frame: dims,
            action_dims: 2,
            seed: 0,
        };
        let be = BeliefEstimates {
            beliefs: vec![vec![0.3, -0.4]; t],
            dims: 2,
        };
        (ds, be)
    }

    #[test]
    fn constant_targets_are_fit() {
        let (ds, be) = constant_dataset(5);
        let cfg = TrainConfig {
            epochs: 200,
            rate: 0.05,
            holdout: 0.0,
            topology: Topology {
                transition_hidden: vec![4],
                decoder_hidden: vec![4],
                encoder_hidden: Some(vec![4]),
            },
            ..TrainConfig::default()
        };
        let (ls, log) = pretrain(&ds, &be, &cfg).unwrap();
        assert!(log.transition.final_loss().unwrap() < 1e-4);
        assert!(log.decoder.final_loss().unwrap() < 1e-4);
        assert!(log.encoder.as_ref().unwrap().final_loss().unwrap() < 1e-4);
        let v = BeliefVector::new(vec![0.3, -0.4]).unwrap();
        let next = ls.predict_transition(&v, &ActionVector::one_hot(2, 1)).unwrap();
        assert!((next[0] - 0.3).abs() < 0.02 && (next[1] + 0.4).abs() < 0.02);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let (ds, mut be) = constant_dataset(5);
        be.beliefs.pop();
        assert!(pretrain(&ds, &be, &TrainConfig::default()).is_err());
        let (ds, be) = constant_dataset(5);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(pretrain(&ds, &be, &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, be) = constant_dataset(6);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (a, la) = pretrain(&ds, &be, &cfg).unwrap();
        let (b, lb) = pretrain(&ds, &be, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }
}

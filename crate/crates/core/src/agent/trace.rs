//! Closed-loop episodes and their JSON-lines trace files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::Agent;
use crate::env::{observation_to_png, png_to_observation, Environment};
use crate::error::{Error, Result};
use crate::types::Observation;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Ground-truth state when the observation was rendered. For evaluation.
    pub state: Vec<f64>,
    pub observation: Observation,
    pub belief: Option<Vec<f64>>,
    pub action: Vec<f64>,
    pub predicted: Option<Observation>,
    pub error_norm: Option<f64>,
    pub elite_utility: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    /// Ground-truth state after the last action.
    pub final_state: Vec<f64>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Mean of the logged error-signal norms, skipping steps without one.
    pub fn mean_error_norm(&self) -> Option<f64> {
        let norms: Vec<f64> = self.steps.iter().filter_map(|s| s.error_norm).collect();
        (!norms.is_empty()).then(|| norms.iter().sum::<f64>() / norms.len() as f64)
    }

    pub fn actions(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.action.clone()).collect()
    }

    /// Writes one JSON object per step. PNG frames go beside the trace file
    /// in `<stem>_frames/` unless inlined as base64.
    pub fn save_jsonl(&self, path: impl AsRef<Path>, storage: FrameStorage) -> Result<()> {
        let path = path.as_ref();
        let frame_dir = frame_dir(path);
        if storage == FrameStorage::PngFiles {
            fs::create_dir_all(&frame_dir)?;
        }
        let dir_name = frame_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut out = BufWriter::new(fs::File::create(path)?);
        for s in &self.steps {
            let store = |x: &Observation, tag: &str| -> Result<FrameRef> {
                let png = observation_to_png(x)?;
                Ok(match storage {
                    FrameStorage::Inline => FrameRef::Base64 {
                        png_base64: STANDARD.encode(png),
                    },
                    FrameStorage::PngFiles => {
                        let name = format!("{:05}_{tag}.png", s.t);
                        fs::write(frame_dir.join(&name), png)?;
                        FrameRef::Path {
                            png_path: format!("{dir_name}/{name}"),
                        }
                    }
                })
            };
            let line = StepLine {
                t: s.t,
                state: s.state.clone(),
                observation: store(&s.observation, "obs")?,
                aux: s.observation.aux.clone(),
                belief: s.belief.clone(),
                action: s.action.clone(),
                predicted: s.predicted.as_ref().map(|p| store(p, "pred")).transpose()?,
                error_norm: s.error_norm,
                elite_utility: s.elite_utility,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        let tail = TailLine {
            final_state: self.final_state.clone(),
        };
        serde_json::to_writer(&mut out, &tail)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`save_jsonl`](Self::save_jsonl). Frames come
    /// back quantized to 8 bits.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let load = |r: &FrameRef| -> Result<Observation> {
            let bytes = match r {
                FrameRef::Base64 { png_base64 } => STANDARD
                    .decode(png_base64)
                    .map_err(|e| Error::Format(format!("bad base64 frame: {e}")))?,
                FrameRef::Path { png_path } => fs::read(base.join(png_path))?,
            };
            png_to_observation(&bytes)
        };
        let mut trace = EpisodeTrace::default();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)?;
            if value.get("final_state").is_some() {
                let tail: TailLine = serde_json::from_value(value)?;
                trace.final_state = tail.final_state;
                continue;
            }
            let s: StepLine = serde_json::from_value(value)?;
            let mut observation = load(&s.observation)?;
            observation.aux = s.aux;
            trace.steps.push(StepRecord {
                t: s.t,
                state: s.state,
                observation,
                belief: s.belief,
                action: s.action,
                predicted: s.predicted.as_ref().map(load).transpose()?,
                error_norm: s.error_norm,
                elite_utility: s.elite_utility,
            });
        }
        Ok(trace)
    }
}

fn frame_dir(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    path.with_file_name(format!("{stem}_frames"))
}

/// Where trace frames are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameStorage {
    PngFiles,
    Inline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameRef {
    Path { png_path: String },
    Base64 { png_base64: String },
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    t: usize,
    state: Vec<f64>,
    observation: FrameRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    aux: Vec<f64>,
    belief: Option<Vec<f64>>,
    action: Vec<f64>,
    predicted: Option<FrameRef>,
    error_norm: Option<f64>,
    elite_utility: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TailLine {
    final_state: Vec<f64>,
}

/// Resets `env` with `seed` and the agent, then runs render -> act -> step
/// for `steps` iterations or until the environment reports completion.
pub fn run_episode(agent: &mut dyn Agent, env: &mut dyn Environment, steps: usize, seed: u64) -> Result<EpisodeTrace> {
    if steps == 0 {
        return Err(Error::InvalidArgument("an episode needs steps >= 1".into()));
    }
    env.reset(seed);
    agent.reset();
    let mut trace = EpisodeTrace::default();
    for t in 0..steps {
        if env.is_done() {
            break;
        }
        let state = env.state();
        let observation = env.render();
        let out = agent.act(&observation)?;
        env.step(&out.action)?;
        trace.steps.push(StepRecord {
            t,
            state,
            observation,
            belief: out.belief.map(|b| b.into_inner()),
            action: out.action.into_inner(),
            predicted: out.predicted,
            error_norm: out.error_norm,
            elite_utility: out.elite_utility,
        });
    }
    trace.final_state = env.state();
    Ok(trace)
}

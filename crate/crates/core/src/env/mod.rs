//! Simulated worlds observed through a camera.
//!
//! Every environment is seeded: `reset(seed)` fixes the initial state and the
//! noise generator, so a reset/step/render sequence is reproducible.

mod corridor;
mod crane;
mod ramp;
pub(crate) mod raster;
mod warehouse;

use std::io::Cursor;

use serde::{Deserialize, Serialize};

pub use corridor::{AliasedCorridor, Cue};
pub use crane::Crane;
pub use ramp::Ramp;
pub use warehouse::{Rect, Warehouse, WarehouseMap};

use crate::error::{Error, Result};
use crate::types::{ActionSpace, ActionVector, FrameDims, Observation};

/// Standard deviations of injected Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Added to every state coordinate per step.
    pub transition: f64,
    /// Added to every rendered pixel value before clamping.
    pub observation: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        transition: 0.0,
        observation: 0.0,
    };
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            transition: 0.005,
            observation: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Crane,
    Warehouse,
    RampTest,
    AliasedCorridor,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crane" => Ok(EnvKind::Crane),
            "warehouse" => Ok(EnvKind::Warehouse),
            "ramp-test" | "ramp" => Ok(EnvKind::RampTest),
            "aliased-corridor" | "corridor" => Ok(EnvKind::AliasedCorridor),
            other => Err(Error::Config(format!("unknown environment kind {other:?}"))),
        }
    }
}

pub trait Environment: Send + Sync {
    fn kind(&self) -> EnvKind;

    /// Reseeds the noise generator and returns the initial state.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &ActionVector) -> Result<Vec<f64>>;

    fn render(&mut self) -> Observation;

    /// Ground-truth state. Never shown to the agent.
    fn state(&self) -> Vec<f64>;

    fn set_state(&mut self, state: &[f64]) -> Result<()>;

    fn action_space(&self) -> ActionSpace;

    fn frame_dims(&self) -> FrameDims;

    /// Episodic worlds report termination here.
    fn is_done(&self) -> bool {
        false
    }

    fn boxed_clone(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Builds a default-configured environment of the given kind.
pub fn make_env(kind: EnvKind, noise: NoiseConfig) -> Box<dyn Environment> {
    match kind {
        EnvKind::Crane => Box::new(Crane::new(noise)),
        EnvKind::Warehouse => Box::new(Warehouse::new(WarehouseMap::default(), noise)),
        EnvKind::RampTest => Box::new(Ramp::new(noise)),
        EnvKind::AliasedCorridor => Box::new(AliasedCorridor::new(3)),
    }
}

/// Index of the hot entry of a discrete action, validated against `n`.
pub(crate) fn discrete_index(action: &ActionVector, n: usize) -> Result<usize> {
    ActionSpace::Discrete { n }.validate(action)?;
    Ok(action.argmax())
}

/// Encodes a frame as PNG (RGB for 3 channels, grayscale for 1).
pub fn observation_to_png(obs: &Observation) -> Result<Vec<u8>> {
    let dims = obs.dims;
    let to_u8 = |v: &f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = obs.pixels.iter().map(to_u8).collect();
    let (w, h) = (dims.width as u32, dims.height as u32);
    let img: image::DynamicImage = match dims.channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .map(image::DynamicImage::ImageLuma8)
            .ok_or_else(|| Error::Image("bad grayscale buffer".into()))?,
        3 => image::RgbImage::from_raw(w, h, bytes)
            .map(image::DynamicImage::ImageRgb8)
            .ok_or_else(|| Error::Image("bad rgb buffer".into()))?,
        c => return Err(Error::Image(format!("cannot encode {c}-channel frame"))),
    };
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes a PNG written by [`observation_to_png`] back into a frame.
pub fn png_to_observation(bytes: &[u8]) -> Result<Observation> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        image::DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        other => (3, other.into_rgb8().into_raw()),
    };
    let pixels = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
    Observation::new(FrameDims::new(w, h, channels), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_has_signature() {
        let obs = Observation::filled(FrameDims::new(4, 3, 3), 0.5);
        let png = observation_to_png(&obs).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        let gray = Observation::filled(FrameDims::new(2, 2, 1), 0.1);
        let back = png_to_observation(&observation_to_png(&gray).unwrap()).unwrap();
        assert_eq!(back.dims, gray.dims);
        assert!(back.pixels.iter().all(|p| (p - 0.1).abs() < 0.5 / 255.0 + 1e-12));
        let rgb = png_to_observation(&png).unwrap();
        assert_eq!(rgb.dims, obs.dims);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("crane".parse::<EnvKind>().unwrap(), EnvKind::Crane);
        assert_eq!("ramp-test".parse::<EnvKind>().unwrap(), EnvKind::RampTest);
        assert!("nope".parse::<EnvKind>().is_err());
    }

    #[test]
    fn every_kind_renders_in_range() {
        for kind in [
            EnvKind::Crane,
            EnvKind::Warehouse,
            EnvKind::RampTest,
            EnvKind::AliasedCorridor,
        ] {
            let mut env = make_env(kind, NoiseConfig::default());
            env.reset(3);
            let x = env.render();
            assert_eq!(x.pixels.len(), env.frame_dims().len());
            assert!(x.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}

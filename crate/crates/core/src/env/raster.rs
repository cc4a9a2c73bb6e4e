//! Tiny soft-edged rasterizer shared by the renderers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::types::{FrameDims, Observation};

/// Width in pixels of the linear ramp at shape edges.
const EDGE: f64 = 2.0;

pub(crate) struct Canvas {
    dims: FrameDims,
    pixels: Vec<f64>,
}

fn ramp(t: f64) -> f64 {
    (t / EDGE + 0.5).clamp(0.0, 1.0)
}

impl Canvas {
    pub(crate) fn new(dims: FrameDims, background: &[f64]) -> Self {
        let mut pixels = Vec::with_capacity(dims.len());
        for _ in 0..dims.pixel_count() {
            pixels.extend_from_slice(&background[..dims.channels]);
        }
        Self { dims, pixels }
    }

    fn blend(&mut self, i: usize, j: usize, alpha: f64, color: &[f64]) {
        if alpha <= 0.0 {
            return;
        }
        let c = self.dims.channels;
        let px = &mut self.pixels[(j * self.dims.width + i) * c..][..c];
        for (p, col) in px.iter_mut().zip(color) {
            *p = *p * (1.0 - alpha) + col * alpha;
        }
    }

    /// Axis-aligned rectangle in pixel units, soft edges.
    pub(crate) fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: &[f64]) {
        let i_lo = (x0 - EDGE).floor().max(0.0) as usize;
        let i_hi = ((x1 + EDGE).ceil().max(0.0) as usize).min(self.dims.width);
        let j_lo = (y0 - EDGE).floor().max(0.0) as usize;
        let j_hi = ((y1 + EDGE).ceil().max(0.0) as usize).min(self.dims.height);
        for j in j_lo..j_hi {
            let cy = j as f64 + 0.5;
            let ay = ramp(cy - y0).min(ramp(y1 - cy));
            for i in i_lo..i_hi {
                let cx = i as f64 + 0.5;
                let ax = ramp(cx - x0).min(ramp(x1 - cx));
                self.blend(i, j, ax * ay, color);
            }
        }
    }

    /// Filled disk in pixel units, soft edge.
    pub(crate) fn disk(&mut self, cx: f64, cy: f64, radius: f64, color: &[f64]) {
        let i_lo = (cx - radius - EDGE).floor().max(0.0) as usize;
        let i_hi = ((cx + radius + EDGE).ceil().max(0.0) as usize).min(self.dims.width);
        let j_lo = (cy - radius - EDGE).floor().max(0.0) as usize;
        let j_hi = ((cy + radius + EDGE).ceil().max(0.0) as usize).min(self.dims.height);
        for j in j_lo..j_hi {
            for i in i_lo..i_hi {
                let dx = i as f64 + 0.5 - cx;
                let dy = j as f64 + 0.5 - cy;
                let dist = (dx * dx + dy * dy).sqrt();
                self.blend(i, j, ramp(radius - dist), color);
            }
        }
    }

    /// Adds Gaussian pixel noise, clamps into `[0, 1]`.
    pub(crate) fn finish<R: Rng + ?Sized>(mut self, noise: f64, rng: &mut R) -> Observation {
        if noise > 0.0 {
            let normal = Normal::new(0.0, noise).expect("positive std");
            for p in self.pixels.iter_mut() {
                *p += normal.sample(rng);
            }
        }
        self.pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
        Observation {
            dims: self.dims,
            pixels: self.pixels,
            aux: Vec::new(),
        }
    }
}

/// Gaussian sample with the given std (zero std returns 0 without drawing).
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("positive std").sample(rng)
    } else {
        0.0
    }
}

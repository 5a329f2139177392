//! Seeded moving-texture sequences for tests, demos and benchmarks.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::Frame;

/// A rigidly translating sum of random plane waves.
///
/// Intensities are rescaled over the whole sequence so the darkest pixel is
/// `low` and the brightest is `high`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingTexture {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Microseconds between consecutive frames.
    pub interval: u64,
    /// Pixels per frame along x and y.
    pub velocity: (f64, f64),
    pub waves: usize,
    /// Longest wavelength in pixels; shorter ones go down to a quarter of it.
    pub wavelength: f64,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl Default for MovingTexture {
    fn default() -> Self {
        MovingTexture {
            width: 240,
            height: 180,
            frames: 100,
            interval: 10_000,
            velocity: (1.0, 0.5),
            waves: 6,
            wavelength: 48.0,
            low: 0.0,
            high: 1.0,
            seed: 0,
        }
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

impl MovingTexture {
    pub fn generate<T: Scalar>(&self) -> Result<Vec<Frame<T>>> {
        if self.width == 0 || self.height == 0 || self.frames == 0 || self.waves == 0 {
            return Err(Error::invalid("texture", "sizes and wave count must be positive"));
        }
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(Error::invalid(
                "texture range",
                format!("need 0 <= low < high <= 1, got [{}, {}]", self.low, self.high),
            ));
        }
        if !(self.wavelength > 0.0 && self.interval > 0) {
            return Err(Error::invalid("texture", "wavelength and interval must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let waves: Vec<Wave> = (0..self.waves)
            .map(|_| {
                let lambda = self.wavelength * rng.random_range(0.25..=1.0);
                let dir = rng.random_range(0.0..TAU);
                Wave {
                    kx: TAU / lambda * dir.cos(),
                    ky: TAU / lambda * dir.sin(),
                    phase: rng.random_range(0.0..TAU),
                    amp: rng.random_range(0.5..=1.0),
                }
            })
            .collect();

        let raw: Vec<Vec<f64>> = (0..self.frames)
            .map(|i| {
                let (ox, oy) = (self.velocity.0 * i as f64, self.velocity.1 * i as f64);
                (0..self.height)
                    .flat_map(|y| (0..self.width).map(move |x| (x as f64 - ox, y as f64 - oy)))
                    .map(|(x, y)| {
                        waves
                            .iter()
                            .map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin())
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let (min, max) = raw
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = (max - min).max(f64::MIN_POSITIVE);
        raw.into_iter()
            .enumerate()
            .map(|(i, px)| {
                let pixels = px
                    .into_iter()
                    .map(|v| T::lit((self.low + (self.high - self.low) * (v - min) / span).clamp(self.low, self.high)))
                    .collect();
                Frame::new(self.width, self.height, i as u64 * self.interval, pixels)
            })
            .collect()
    }
}

//! Recursive frame generation from event counts.
//!
//! The model is `f₁ = exp(θ₊E₊ − θ₋E₋)(f₀ + k) − k`. Repeated application
//! composes additively in the log domain, so the state keeps the last keyframe
//! and the accumulated log displacement since it. Emitted frames are clamped
//! to `[0, 1]`; the state never is.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{CameraParams, CountPair, EventStream, Frame, Polarity};

/// Counts positive and negative events per pixel over `[t0, t1)`.
pub fn count_events(stream: &EventStream, t0: u64, t1: u64) -> Result<CountPair> {
    if t0 >= t1 {
        return Err(Error::Interval { t0, t1 });
    }
    let (w, h) = (stream.width(), stream.height());
    let mut pos = vec![0u32; w * h];
    let mut neg = vec![0u32; w * h];
    for ev in stream.slice(t0, t1) {
        let i = ev.y as usize * w + ev.x as usize;
        match ev.polarity {
            Polarity::Pos => pos[i] += 1,
            Polarity::Neg => neg[i] += 1,
        }
    }
    CountPair::new(w, h, pos, neg, t0, t1)
}

/// Pixels whose pre-clamp value left `[0, 1]` in one emission.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClipStats {
    pub below: usize,
    pub above: usize,
    pub pixels: usize,
}

impl ClipStats {
    pub fn fraction(&self) -> f64 {
        if self.pixels == 0 {
            0.0
        } else {
            (self.below + self.above) as f64 / self.pixels as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionState<T> {
    width: usize,
    height: usize,
    params: CameraParams<T>,
    keyframe: Vec<T>,
    delta: Vec<T>,
    frames_since_reset: usize,
    reset_interval: usize,
}

impl<T: Scalar> ReconstructionState<T> {
    /// Starts from `keyframe`. `reset_interval == 0` means free-run.
    pub fn new(keyframe: &Frame<T>, params: CameraParams<T>, reset_interval: usize) -> Self {
        ReconstructionState {
            width: keyframe.width(),
            height: keyframe.height(),
            params,
            keyframe: keyframe.pixels().to_vec(),
            delta: vec![T::zero(); keyframe.pixels().len()],
            frames_since_reset: 0,
            reset_interval,
        }
    }

    pub fn params(&self) -> &CameraParams<T> {
        &self.params
    }

    pub fn frames_since_reset(&self) -> usize {
        self.frames_since_reset
    }

    pub fn reset_interval(&self) -> usize {
        self.reset_interval
    }

    /// Whether the configured interval has elapsed since the last reset.
    pub fn reset_due(&self) -> bool {
        self.reset_interval > 0 && self.frames_since_reset >= self.reset_interval
    }

    /// Log displacement accumulated since the last reset.
    pub fn delta(&self) -> &[T] {
        &self.delta
    }

    /// Internal per-pixel value `ln(f̂ + k)`.
    pub fn log_state(&self) -> Vec<T> {
        let k = self.params.k();
        self.keyframe
            .iter()
            .zip(&self.delta)
            .map(|(&f, &d)| (f + k).ln() + d)
            .collect()
    }

    pub fn reset(&mut self, keyframe: &Frame<T>) -> Result<()> {
        if keyframe.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: keyframe.dims(),
            });
        }
        self.keyframe.copy_from_slice(keyframe.pixels());
        self.delta.iter_mut().for_each(|d| *d = T::zero());
        self.frames_since_reset = 0;
        Ok(())
    }

    /// Applies one interval of counts and emits the frame at `counts.t1()`.
    pub fn step(&mut self, counts: &CountPair) -> Result<(Frame<T>, ClipStats)> {
        if counts.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: counts.dims(),
            });
        }
        let params = self.params;
        self.delta
            .par_iter_mut()
            .zip(counts.pos().par_iter().zip(counts.neg().par_iter()))
            .for_each(|(d, (&p, &n))| *d += params.displacement(p, n));

        let k = params.k();
        let (pixels, clip): (Vec<T>, Vec<i8>) = self
            .keyframe
            .par_iter()
            .zip(self.delta.par_iter())
            .map(|(&f0, &d)| {
                let scale = d.exp();
                // exp(0) = 1 reproduces the keyframe; skip the float round trip.
                let v = if scale == T::one() { f0 } else { scale * (f0 + k) - k };
                if v < T::zero() {
                    (T::zero(), -1)
                } else if v > T::one() {
                    (T::one(), 1)
                } else {
                    (v, 0)
                }
            })
            .unzip();
        let stats = ClipStats {
            below: clip.iter().filter(|&&c| c < 0).count(),
            above: clip.iter().filter(|&&c| c > 0).count(),
            pixels: clip.len(),
        };
        self.frames_since_reset += 1;
        Ok((Frame::new(self.width, self.height, counts.t1(), pixels)?, stats))
    }
}

/// Output of [`reconstruct_sequence`].
#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub frames: Vec<Frame<T>>,
    pub clip: Vec<ClipStats>,
}

impl<T> Reconstruction<T> {
    /// Fraction of emitted pixels that needed clamping, over the whole run.
    pub fn overflow_fraction(&self) -> f64 {
        let clipped: usize = self.clip.iter().map(|c| c.below + c.above).sum();
        let total: usize = self.clip.iter().map(|c| c.pixels).sum();
        if total == 0 {
            0.0
        } else {
            clipped as f64 / total as f64
        }
    }
}

/// Reconstructs the frames at `boundaries[1..]` from the events between
/// consecutive boundaries.
///
/// The state starts from the keyframe at `boundaries[0]`. With
/// `reset_interval = R > 0`, after every `R` emitted frames the state is reset
/// to the keyframe at the current boundary before the next step.
pub fn reconstruct_sequence<T: Scalar>(
    stream: &EventStream,
    keyframes: &[Frame<T>],
    boundaries: &[u64],
    params: CameraParams<T>,
    reset_interval: usize,
) -> Result<Reconstruction<T>> {
    if boundaries.len() < 2 {
        return Err(Error::invalid("boundaries", "need at least two timestamps"));
    }
    if let Some(i) = boundaries.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotIncreasing {
            index: i + 1,
            prev: boundaries[i],
            next: boundaries[i + 1],
        });
    }
    let dims = (stream.width(), stream.height());
    let mut by_time = BTreeMap::new();
    for kf in keyframes {
        if kf.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: kf.dims(),
            });
        }
        by_time.insert(kf.t(), kf);
    }
    let first = by_time.get(&boundaries[0]).ok_or(Error::MissingKeyframe {
        t: boundaries[0],
        reason: "initial state",
    })?;
    let mut state = ReconstructionState::new(first, params, reset_interval);

    let n = boundaries.len() - 1;
    let mut out = Reconstruction {
        frames: Vec::with_capacity(n),
        clip: Vec::with_capacity(n),
    };
    for w in boundaries.windows(2) {
        if state.reset_due() {
            let kf = by_time.get(&w[0]).ok_or(Error::MissingKeyframe {
                t: w[0],
                reason: "periodic reset",
            })?;
            state.reset(kf)?;
        }
        let counts = count_events(stream, w[0], w[1])?;
        let (frame, clip) = state.step(&counts)?;
        out.frames.push(frame);
        out.clip.push(clip);
    }
    Ok(out)
}

//! Frame-driven event simulation.
//!
//! Each pixel keeps a latched reference log-intensity. Between two frames the
//! log-intensity is interpolated linearly in time; every time it moves a full
//! threshold away from the reference an event is emitted at the interpolated
//! crossing time and the reference advances by exactly that threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{CameraParams, Event, EventStream, Frame, Polarity};

/// Sampled thresholds are redrawn until they exceed this value.
pub const MIN_SAMPLED_THRESHOLD: f64 = 0.01;

const MAX_SAMPLE_ATTEMPTS: usize = 100_000;

/// Per-pixel `ln(f + k)`.
pub fn log_intensity<T: Scalar>(frame: &Frame<T>, k: T) -> Result<Vec<T>> {
    if !(k.is_finite() && k > T::zero()) {
        return Err(Error::invalid(
            "offset k",
            format!("{k} is not a positive finite value"),
        ));
    }
    frame
        .pixels()
        .iter()
        .map(|&f| {
            let l = (f + k).ln();
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::invalid("pixel", format!("ln({f} + {k}) is not finite")))
            }
        })
        .collect()
}

/// Streaming simulator; feed frames in time order with [`Simulator::advance`].
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    width: usize,
    height: usize,
    params: CameraParams<T>,
    start_log: Vec<T>,
    ref_log: Vec<T>,
    current_log: Vec<T>,
    t: u64,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(first: &Frame<T>, params: CameraParams<T>) -> Result<Self> {
        let log = log_intensity(first, params.k())?;
        Ok(Simulator {
            width: first.width(),
            height: first.height(),
            params,
            start_log: log.clone(),
            ref_log: log.clone(),
            current_log: log,
            t: first.t(),
        })
    }

    pub fn params(&self) -> &CameraParams<T> {
        &self.params
    }

    /// Timestamp of the last frame consumed.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Log-intensity of the first frame.
    pub fn start_log(&self) -> &[T] {
        &self.start_log
    }

    /// Latched reference, moved only by whole thresholds.
    pub fn ref_log(&self) -> &[T] {
        &self.ref_log
    }

    /// Log-intensity of the last frame consumed.
    pub fn current_log(&self) -> &[T] {
        &self.current_log
    }

    /// Consumes the next frame and returns the events it triggers, canonically
    /// ordered.
    ///
    /// A crossing at real time `tc ∈ (t_prev, t_next]` is stamped
    /// `min(floor(tc), t_next - 1)`, so every event lands in the half-open
    /// interval `[t_prev, t_next)` of the frame pair that produced it.
    pub fn advance(&mut self, next: &Frame<T>) -> Result<Vec<Event>> {
        if next.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: next.dims(),
            });
        }
        if next.t() <= self.t {
            return Err(Error::NotIncreasing {
                index: 0,
                prev: self.t,
                next: next.t(),
            });
        }
        let target = log_intensity(next, self.params.k())?;
        let (ta, dt) = (self.t, next.t() - self.t);
        let (theta_pos, theta_neg) = (self.params.theta_pos(), self.params.theta_neg());
        let width = self.width.max(1);

        let rows: Vec<Vec<Event>> = self
            .ref_log
            .par_chunks_mut(width)
            .zip(self.current_log.par_chunks(width))
            .zip(target.par_chunks(width))
            .enumerate()
            .map(|(y, ((refs, from), to))| {
                let mut out = Vec::new();
                for (x, ((r, &la), &lb)) in refs.iter_mut().zip(from).zip(to).enumerate() {
                    emit_crossings(r, la, lb, theta_pos, theta_neg, |frac, polarity| {
                        let offset = ((frac.as_f64() * dt as f64).floor() as u64).min(dt - 1);
                        out.push(Event::new(ta + offset, x as u32, y as u32, polarity));
                    });
                }
                out
            })
            .collect();

        let mut events: Vec<Event> = rows.into_iter().flatten().collect();
        events.sort_by_key(Event::order_key);
        self.current_log = target;
        self.t = next.t();
        Ok(events)
    }
}

/// Walks one pixel from `from` to `to`, advancing `reference` threshold by
/// threshold. `emit` receives the crossing position as a fraction of the
/// interval in `(0, 1]`.
pub(crate) fn emit_crossings<T: Scalar>(
    reference: &mut T,
    from: T,
    to: T,
    theta_pos: T,
    theta_neg: T,
    mut emit: impl FnMut(T, Polarity),
) {
    let span = to - from;
    // A return to an earlier intensity lands exactly one threshold from the
    // reference, which rounding can leave a few ulps short. Such ties count
    // as crossings.
    let slack = |r: T| T::epsilon() * T::lit(64.0) * (T::one() + to.abs() + r.abs());
    if span > T::zero() {
        while to - *reference >= theta_pos - slack(*reference) {
            *reference += theta_pos;
            let frac = ((*reference - from) / span).max(T::zero()).min(T::one());
            emit(frac, Polarity::Pos);
        }
    } else if span < T::zero() {
        while *reference - to >= theta_neg - slack(*reference) {
            *reference -= theta_neg;
            let frac = ((*reference - from) / span).max(T::zero()).min(T::one());
            emit(frac, Polarity::Neg);
        }
    }
}

/// Simulates the event stream produced by a frame sequence.
pub fn simulate_events<T: Scalar>(frames: &[Frame<T>], params: CameraParams<T>) -> Result<EventStream> {
    let (first, rest) = match frames {
        [first, rest @ ..] if !rest.is_empty() => (first, rest),
        _ => return Err(Error::invalid("frame sequence", "need at least two frames")),
    };
    for (i, pair) in frames.windows(2).enumerate() {
        if pair[1].dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                actual: pair[1].dims(),
            });
        }
        if pair[1].t() <= pair[0].t() {
            return Err(Error::NotIncreasing {
                index: i + 1,
                prev: pair[0].t(),
                next: pair[1].t(),
            });
        }
    }
    let mut sim = Simulator::new(first, params)?;
    let mut events = Vec::new();
    for frame in rest {
        events.extend(sim.advance(frame)?);
    }
    EventStream::new(first.width(), first.height(), events)
}

/// Draws per-sequence thresholds from `N(mean, sigma²)`, redrawing any value
/// not above [`MIN_SAMPLED_THRESHOLD`]. Deterministic in `seed`.
pub fn sample_thresholds<T: Scalar>(
    seed: u64,
    mean_pos: f64,
    mean_neg: f64,
    sigma: f64,
    k: T,
) -> Result<CameraParams<T>> {
    if !(mean_pos > 0.0 && mean_neg > 0.0 && mean_pos.is_finite() && mean_neg.is_finite()) {
        return Err(Error::invalid(
            "threshold means",
            format!("{mean_pos}/{mean_neg} must be positive"),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("threshold sigma", format!("{sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |mean: f64| -> Result<f64> {
        let normal = Normal::new(mean, sigma).map_err(|e| Error::invalid("threshold distribution", e.to_string()))?;
        (0..MAX_SAMPLE_ATTEMPTS)
            .map(|_| normal.sample(&mut rng))
            .find(|&v| v > MIN_SAMPLED_THRESHOLD)
            .ok_or_else(|| {
                Error::invalid(
                    "threshold distribution",
                    format!("N({mean}, {sigma}²) rarely exceeds {MIN_SAMPLED_THRESHOLD}"),
                )
            })
    };
    let pos = draw(mean_pos)?;
    let neg = draw(mean_neg)?;
    CameraParams::new(T::lit(pos), T::lit(neg), k)
}

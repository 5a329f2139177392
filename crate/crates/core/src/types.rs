//! Domain types shared by every module.
//!
//! All types validate on construction and are immutable afterwards, so a value
//! that exists is a value that satisfies its invariants.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sign of a log-intensity change.
///
/// `Neg` orders before `Pos`; that order is the final tie-breaker of the
/// canonical event ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Neg,
    Pos,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Pos => 1,
            Polarity::Neg => -1,
        }
    }

    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Polarity::Pos),
            -1 => Ok(Polarity::Neg),
            other => Err(Error::invalid("polarity", format!("{other} is not +1 or -1"))),
        }
    }
}

/// A single threshold crossing at one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u32, y: u32, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }

    /// Canonical sort key: time, then row, column and polarity.
    #[inline]
    pub fn order_key(&self) -> (u64, u32, u32, Polarity) {
        (self.t, self.y, self.x, self.polarity)
    }

    #[inline]
    fn in_bounds(&self, width: usize, height: usize) -> bool {
        (self.x as usize) < width && (self.y as usize) < height
    }
}

/// Which [`EventStream`] invariant an event breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Sorted,
    Bounds,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Sorted => "sorted",
            Rule::Bounds => "bounds",
        })
    }
}

/// First violation found by [`validate_events`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamViolation {
    pub index: usize,
    pub rule: Rule,
}

impl fmt::Display for StreamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {} violates rule \"{}\"", self.index, self.rule)
    }
}

/// Checks the stream invariants over raw parts and reports the first offender.
///
/// Bounds are checked before ordering at each index, so an out-of-range event
/// that is also out of order is reported as a bounds violation.
pub fn validate_events(width: usize, height: usize, events: &[Event]) -> std::result::Result<(), StreamViolation> {
    for (index, ev) in events.iter().enumerate() {
        if !ev.in_bounds(width, height) {
            return Err(StreamViolation {
                index,
                rule: Rule::Bounds,
            });
        }
        if index > 0 && events[index - 1].order_key() > ev.order_key() {
            return Err(StreamViolation {
                index,
                rule: Rule::Sorted,
            });
        }
    }
    Ok(())
}

/// Events from a `width × height` sensor in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: usize,
    height: usize,
    events: Vec<Event>,
}

impl EventStream {
    /// Wraps already-canonical events, rejecting any invariant violation.
    pub fn new(width: usize, height: usize, events: Vec<Event>) -> Result<Self> {
        validate_events(width, height, &events).map_err(|v| Error::invalid("event stream", v.to_string()))?;
        Ok(EventStream { width, height, events })
    }

    /// Sorts (stably) into canonical order, then validates bounds.
    pub fn from_unordered(width: usize, height: usize, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by_key(Event::order_key);
        Self::new(width, height, events)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Re-runs the invariant check. Always `Ok` for a constructed stream.
    pub fn validate(&self) -> std::result::Result<(), StreamViolation> {
        validate_events(self.width, self.height, &self.events)
    }

    /// Events with `t0 <= t < t1`, found by binary search.
    pub fn slice(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }
}

/// Normalized grayscale image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    t: u64,
    pixels: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(width: usize, height: usize, t: u64, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "frame",
                format!("{} pixels for a {width}x{height} frame", pixels.len()),
            ));
        }
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::invalid("frame", format!("pixel {i} = {v} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            t,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, t: u64, value: T) -> Result<Self> {
        Self::new(width, height, t, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Microseconds.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn with_t(mut self, t: u64) -> Self {
        self.t = t;
        self
    }
}

/// Scalar event-camera model parameters for one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams<T> {
    theta_pos: T,
    theta_neg: T,
    k: T,
}

impl<T: Scalar> CameraParams<T> {
    pub fn new(theta_pos: T, theta_neg: T, k: T) -> Result<Self> {
        for (name, v) in [("theta_pos", theta_pos), ("theta_neg", theta_neg), ("k", k)] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::invalid("camera params", format!("{name} = {v}")));
            }
        }
        Ok(CameraParams {
            theta_pos,
            theta_neg,
            k,
        })
    }

    pub fn theta_pos(&self) -> T {
        self.theta_pos
    }

    pub fn theta_neg(&self) -> T {
        self.theta_neg
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn theta_max(&self) -> T {
        self.theta_pos.max(self.theta_neg)
    }

    /// Log-domain displacement represented by a pair of event counts.
    #[inline]
    pub fn displacement(&self, pos: u32, neg: u32) -> T {
        self.theta_pos * T::from_count(pos) - self.theta_neg * T::from_count(neg)
    }
}

/// Per-pixel positive and negative event counts over `[t0, t1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountPair {
    width: usize,
    height: usize,
    pos: Vec<u32>,
    neg: Vec<u32>,
    t0: u64,
    t1: u64,
}

impl CountPair {
    pub fn new(width: usize, height: usize, pos: Vec<u32>, neg: Vec<u32>, t0: u64, t1: u64) -> Result<Self> {
        if t0 >= t1 {
            return Err(Error::Interval { t0, t1 });
        }
        let n = width * height;
        if pos.len() != n || neg.len() != n {
            return Err(Error::invalid(
                "count pair",
                format!("{}/{} counts for {n} pixels", pos.len(), neg.len()),
            ));
        }
        Ok(CountPair {
            width,
            height,
            pos,
            neg,
            t0,
            t1,
        })
    }

    pub fn zeros(width: usize, height: usize, t0: u64, t1: u64) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![0; n], vec![0; n], t0, t1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pos(&self) -> &[u32] {
        &self.pos
    }

    pub fn neg(&self) -> &[u32] {
        &self.neg
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn t1(&self) -> u64 {
        self.t1
    }

    pub fn at(&self, x: usize, y: usize) -> (u32, u32) {
        let i = y * self.width + x;
        (self.pos[i], self.neg[i])
    }

    pub fn total(&self) -> u64 {
        self.pos.iter().chain(&self.neg).map(|&c| u64::from(c)).sum()
    }
}

/// `bins × height × width` temporally binned event tensor, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    bins: usize,
    width: usize,
    height: usize,
    values: Vec<T>,
    t0: u64,
    t1: u64,
}

impl<T: Scalar> VoxelGrid<T> {
    pub fn new(bins: usize, width: usize, height: usize, values: Vec<T>, t0: u64, t1: u64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("voxel grid", "zero bins"));
        }
        if t0 >= t1 {
            return Err(Error::Interval { t0, t1 });
        }
        if values.len() != bins * width * height {
            return Err(Error::invalid(
                "voxel grid",
                format!("{} values for {bins}x{height}x{width}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("voxel grid", "non-finite value"));
        }
        Ok(VoxelGrid {
            bins,
            width,
            height,
            values,
            t0,
            t1,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn t1(&self) -> u64 {
        self.t1
    }

    #[inline]
    pub fn get(&self, bin: usize, x: usize, y: usize) -> T {
        self.values[(bin * self.height + y) * self.width + x]
    }

    /// Sum over every bin and pixel.
    pub fn signed_mass(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Copy scaled so the largest magnitude is 1; an all-zero grid is returned as is.
    pub fn normalized(&self) -> Self {
        let peak = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut out = self.clone();
        if peak > T::zero() {
            out.values.iter_mut().for_each(|v| *v /= peak);
        }
        out
    }
}

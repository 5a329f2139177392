//! Recovery of `θ₊`, `θ₋` and `k` from frames and the events between them.
//!
//! For a fixed `k` every observation row gives one linear equation
//! `θ₊E₊ − θ₋E₋ ≈ y(k)`, solved in closed form by 2×2 normal equations.
//! `k` enters only through `y`, so it is found by a one-dimensional search
//! (log-spaced grid, then golden-section refinement) over the scale-free
//! residual of the inner fit.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reconstruct::count_events;
use crate::scalar::Scalar;
use crate::search::golden_section;
use crate::types::{CameraParams, EventStream, Frame, Polarity};

/// Value a projected or unidentifiable threshold is pinned to.
pub const PARAM_FLOOR: f64 = 1e-4;
/// Points in the coarse log-spaced `k` grid.
pub const K_GRID_POINTS: usize = 64;
/// Relative bracket width at which the `k` refinement stops.
pub const K_REL_WIDTH: f64 = 1e-4;

const CHUNK: usize = 4096;

/// Where inside a frame interval an event-anchored row was sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blend<T> {
    /// Intensity of the frame closing the interval.
    pub next: T,
    /// Position in the interval, `0` at the opening frame.
    pub frac: T,
}

/// One regression sample: event counts between a start intensity and an end
/// intensity at the same pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub pos: u32,
    pub neg: u32,
    pub f0: T,
    pub f1: T,
    /// Set for event-anchored rows: the end log-intensity is interpolated
    /// between `f1` and `blend.next`.
    pub blend: Option<Blend<T>>,
}

fn unit_interval<T: Scalar>(what: &'static str, v: T) -> Result<()> {
    if v.is_finite() && v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(what, format!("{v} outside [0, 1]")))
    }
}

impl<T: Scalar> Observation<T> {
    pub fn new(pos: u32, neg: u32, f0: T, f1: T) -> Result<Self> {
        unit_interval("observation intensity", f0)?;
        unit_interval("observation intensity", f1)?;
        Ok(Observation {
            pos,
            neg,
            f0,
            f1,
            blend: None,
        })
    }

    pub fn blended(pos: u32, neg: u32, f0: T, f1: T, next: T, frac: T) -> Result<Self> {
        unit_interval("observation intensity", next)?;
        unit_interval("blend fraction", frac)?;
        Ok(Observation {
            blend: Some(Blend { next, frac }),
            ..Self::new(pos, neg, f0, f1)?
        })
    }

    pub fn has_events(&self) -> bool {
        self.pos > 0 || self.neg > 0
    }

    /// `y(k)`: the log-intensity change the counts should explain.
    #[inline]
    pub fn target(&self, k: T) -> T {
        match self.blend {
            None => ((self.f1 + k) / (self.f0 + k)).ln(),
            Some(Blend { next, frac }) => {
                (T::one() - frac) * (self.f1 + k).ln() + frac * (next + k).ln() - (self.f0 + k).ln()
            }
        }
    }

    #[inline]
    fn residual(&self, k: T, theta_pos: T, theta_neg: T) -> T {
        theta_pos * T::from_count(self.pos) - theta_neg * T::from_count(self.neg) - self.target(k)
    }
}

/// How rows are formed from a frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowAnchor {
    /// One row per pixel and consecutive frame pair.
    #[default]
    Consecutive,
    /// One row per pixel and later frame, counts accumulated from the first
    /// frame.
    FirstFrame,
    /// One row per event: counts accumulated from the first frame up to and
    /// including the event, end intensity interpolated in the log domain at the
    /// event time.
    EventTime,
}

impl std::str::FromStr for RowAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consecutive" => Ok(RowAnchor::Consecutive),
            "first" | "first-frame" => Ok(RowAnchor::FirstFrame),
            "event" | "event-time" => Ok(RowAnchor::EventTime),
            other => Err(Error::invalid("row anchor", other.to_string())),
        }
    }
}

/// How an [`ObservationSet`] was sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePolicy {
    pub anchor: RowAnchor,
    pub max_rows: usize,
    pub seed: u64,
    /// Rows available before subsampling.
    pub candidates: usize,
    /// Of those, rows with at least one event.
    pub candidates_with_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    rows: Vec<Observation<T>>,
    policy: SamplePolicy,
}

impl<T: Scalar> ObservationSet<T> {
    /// Wraps hand-built rows; the policy records them as unsampled.
    pub fn from_rows(rows: Vec<Observation<T>>) -> Self {
        let n = rows.len();
        let with_events = rows.iter().filter(|r| r.has_events()).count();
        ObservationSet {
            rows,
            policy: SamplePolicy {
                anchor: RowAnchor::Consecutive,
                max_rows: n,
                seed: 0,
                candidates: n,
                candidates_with_events: with_events,
            },
        }
    }

    pub fn rows(&self) -> &[Observation<T>] {
        &self.rows
    }

    pub fn policy(&self) -> &SamplePolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Consecutive-pair rows, see [`build_observations_with`].
pub fn build_observations<T: Scalar>(
    frames: &[Frame<T>],
    stream: &EventStream,
    max_rows: usize,
    seed: u64,
) -> Result<ObservationSet<T>> {
    build_observations_with(frames, stream, max_rows, seed, RowAnchor::Consecutive)
}

/// Forms regression rows from a frame sequence and its event stream.
///
/// When more than `max_rows` rows exist they are subsampled uniformly with
/// `seed`: rows with events are kept first, and rows without events fill the
/// remainder up to at most half of the sample.
pub fn build_observations_with<T: Scalar>(
    frames: &[Frame<T>],
    stream: &EventStream,
    max_rows: usize,
    seed: u64,
    anchor: RowAnchor,
) -> Result<ObservationSet<T>> {
    if frames.len() < 2 {
        return Err(Error::invalid("frame sequence", "need at least two frames"));
    }
    if max_rows == 0 {
        return Err(Error::invalid("max_rows", "must be positive"));
    }
    let dims = (stream.width(), stream.height());
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: f.dims(),
            });
        }
        if i > 0 && f.t() <= frames[i - 1].t() {
            return Err(Error::NotIncreasing {
                index: i,
                prev: frames[i - 1].t(),
                next: f.t(),
            });
        }
    }

    let rows = match anchor {
        RowAnchor::Consecutive => interval_rows(frames, stream, false)?,
        RowAnchor::FirstFrame => interval_rows(frames, stream, true)?,
        RowAnchor::EventTime => event_rows(frames, stream)?,
    };
    let candidates = rows.len();
    let candidates_with_events = rows.iter().filter(|r| r.has_events()).count();
    let rows = subsample(rows, max_rows, seed);
    Ok(ObservationSet {
        rows,
        policy: SamplePolicy {
            anchor,
            max_rows,
            seed,
            candidates,
            candidates_with_events,
        },
    })
}

fn interval_rows<T: Scalar>(
    frames: &[Frame<T>],
    stream: &EventStream,
    cumulative: bool,
) -> Result<Vec<Observation<T>>> {
    let n = stream.width() * stream.height();
    let mut pos = vec![0u32; n];
    let mut neg = vec![0u32; n];
    let mut rows = Vec::with_capacity(n * (frames.len() - 1));
    for pair in frames.windows(2) {
        let counts = count_events(stream, pair[0].t(), pair[1].t())?;
        let start = if cumulative { &frames[0] } else { &pair[0] };
        if !cumulative {
            pos.iter_mut().for_each(|c| *c = 0);
            neg.iter_mut().for_each(|c| *c = 0);
        }
        for i in 0..n {
            pos[i] += counts.pos()[i];
            neg[i] += counts.neg()[i];
            rows.push(Observation {
                pos: pos[i],
                neg: neg[i],
                f0: start.pixels()[i],
                f1: pair[1].pixels()[i],
                blend: None,
            });
        }
    }
    Ok(rows)
}

fn event_rows<T: Scalar>(frames: &[Frame<T>], stream: &EventStream) -> Result<Vec<Observation<T>>> {
    let w = stream.width();
    let n = w * stream.height();
    let (t_first, t_last) = (frames[0].t(), frames[frames.len() - 1].t());
    let mut pos = vec![0u32; n];
    let mut neg = vec![0u32; n];
    let mut rows = Vec::new();
    let mut interval = 0;
    for ev in stream.slice(t_first, t_last) {
        while frames[interval + 1].t() <= ev.t {
            interval += 1;
        }
        let (open, close) = (&frames[interval], &frames[interval + 1]);
        let i = ev.y as usize * w + ev.x as usize;
        match ev.polarity {
            Polarity::Pos => pos[i] += 1,
            Polarity::Neg => neg[i] += 1,
        }
        // Timestamps are floored crossing times; sample mid-microsecond.
        let span = (close.t() - open.t()) as f64;
        let frac = (((ev.t - open.t()) as f64 + 0.5) / span).min(1.0);
        rows.push(Observation {
            pos: pos[i],
            neg: neg[i],
            f0: frames[0].pixels()[i],
            f1: open.pixels()[i],
            blend: Some(Blend {
                next: close.pixels()[i],
                frac: T::lit(frac),
            }),
        });
    }
    Ok(rows)
}

fn subsample<T: Scalar>(rows: Vec<Observation<T>>, max_rows: usize, seed: u64) -> Vec<Observation<T>> {
    if rows.len() <= max_rows {
        return rows;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (active, idle): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| rows[i].has_events());
    let mut pick = |pool: &[usize], amount: usize| -> Vec<usize> {
        if amount >= pool.len() {
            pool.to_vec()
        } else {
            index::sample(&mut rng, pool.len(), amount)
                .into_iter()
                .map(|j| pool[j])
                .collect()
        }
    };
    let mut chosen = pick(&active, max_rows);
    let room = (max_rows - chosen.len()).min(chosen.len());
    chosen.extend(pick(&idle, room));
    chosen.sort_unstable();
    chosen.into_iter().map(|i| rows[i]).collect()
}

/// Whether the 2×2 system could be solved as posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    WellPosed,
    /// A threshold was projected onto [`PARAM_FLOOR`] or could not be
    /// identified from the data.
    RankDeficientFallback,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::WellPosed => "well-posed",
            Condition::RankDeficientFallback => "rank-deficient-fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<T> {
    pub params: CameraParams<T>,
    /// RMS of `θ₊E₊ − θ₋E₋ − y` over the rows, in log units.
    pub residual_rms: T,
    pub rows_used: usize,
    pub condition: Condition,
}

impl<T: Scalar> FitResult<T> {
    /// Residual RMS in units of the mean fitted threshold. This is the
    /// quantity minimized over `k`: rescaling `y` rescales both the residual
    /// and the thresholds, so only the ratio compares fits across `k`.
    pub fn normalized_residual(&self) -> T {
        let mean_theta = (self.params.theta_pos() + self.params.theta_neg()) / T::lit(2.0);
        self.residual_rms / mean_theta
    }
}

impl<T: Scalar> std::fmt::Display for FitResult<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "theta_pos={} theta_neg={} k={} residual_rms={} rows={} flag={}",
            self.params.theta_pos(),
            self.params.theta_neg(),
            self.params.k(),
            self.residual_rms,
            self.rows_used,
            self.condition
        )
    }
}

/// Sufficient statistics of the linear system at one `k`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments<T> {
    pp: T,
    nn: T,
    pn: T,
    py: T,
    ny: T,
}

impl<T: Scalar> Moments<T> {
    fn add(self, o: Self) -> Self {
        Moments {
            pp: self.pp + o.pp,
            nn: self.nn + o.nn,
            pn: self.pn + o.pn,
            py: self.py + o.py,
            ny: self.ny + o.ny,
        }
    }
}

/// Chunked parallel map-reduce with a fixed combination order, so results do
/// not depend on the thread count.
fn chunked_sum<T, A, F>(rows: &[Observation<T>], zero: A, add: fn(A, A) -> A, f: F) -> A
where
    T: Scalar,
    A: Copy + Send + Sync,
    F: Fn(&Observation<T>) -> A + Sync,
{
    rows.par_chunks(CHUNK)
        .map(|c| c.iter().map(&f).fold(zero, add))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(zero, add)
}

fn moments<T: Scalar>(rows: &[Observation<T>], k: T) -> Moments<T> {
    chunked_sum(rows, Moments::default(), Moments::add, |r| {
        let (p, n, y) = (T::from_count(r.pos), T::from_count(r.neg), r.target(k));
        Moments {
            pp: p * p,
            nn: n * n,
            pn: p * n,
            py: p * y,
            ny: n * y,
        }
    })
}

/// `J(θ₊, θ₋) = Σ (θ₊E₊ − θ₋E₋ − y)²` at offset `k`.
pub fn objective<T: Scalar>(obs: &ObservationSet<T>, k: T, theta_pos: T, theta_neg: T) -> T {
    chunked_sum(
        obs.rows(),
        T::zero(),
        |a, b| a + b,
        |r| {
            let e = r.residual(k, theta_pos, theta_neg);
            e * e
        },
    )
}

/// Analytic `(∂J/∂θ₊, ∂J/∂θ₋)`.
pub fn gradient<T: Scalar>(obs: &ObservationSet<T>, k: T, theta_pos: T, theta_neg: T) -> (T, T) {
    let (gp, gn) = chunked_sum(
        obs.rows(),
        (T::zero(), T::zero()),
        |a, b| (a.0 + b.0, a.1 + b.1),
        |r| {
            let e = r.residual(k, theta_pos, theta_neg);
            (T::from_count(r.pos) * e, T::from_count(r.neg) * e)
        },
    );
    let two = T::lit(2.0);
    (two * gp, -two * gn)
}

/// Least-squares thresholds for a fixed `k`.
///
/// Negative solutions are projected by re-solving with the offending
/// threshold pinned to [`PARAM_FLOOR`]; a singular system fits only the
/// identifiable threshold. Both cases are flagged.
pub fn fit_thresholds_given_k<T: Scalar>(obs: &ObservationSet<T>, k: T) -> Result<FitResult<T>> {
    if !(k.is_finite() && k > T::zero()) {
        return Err(Error::invalid("offset k", format!("{k}")));
    }
    let m = moments(obs.rows(), k);
    if m.pp == T::zero() && m.nn == T::zero() {
        return Err(Error::IllPosed("no row contains any event"));
    }
    let floor = T::lit(PARAM_FLOOR);
    // Minimizers along one coordinate with the other held fixed.
    let best_pos = |theta_neg: T| ((m.py + theta_neg * m.pn) / m.pp).max(floor);
    let best_neg = |theta_pos: T| ((theta_pos * m.pn - m.ny) / m.nn).max(floor);

    let det = m.pp * m.nn - m.pn * m.pn;
    let full_rank = m.pp > T::zero() && m.nn > T::zero() && det > T::lit(1e-12) * m.pp * m.nn;
    let (theta_pos, theta_neg, condition) = if full_rank {
        let a = (m.py * m.nn - m.pn * m.ny) / det;
        let b = (m.pn * m.py - m.pp * m.ny) / det;
        if a > T::zero() && b > T::zero() {
            (a, b, Condition::WellPosed)
        } else if a <= T::zero() {
            (floor, best_neg(floor), Condition::RankDeficientFallback)
        } else {
            (best_pos(floor), floor, Condition::RankDeficientFallback)
        }
    } else if m.pp >= m.nn {
        (best_pos(floor), floor, Condition::RankDeficientFallback)
    } else {
        (floor, best_neg(floor), Condition::RankDeficientFallback)
    };

    let rows_used = obs.len();
    let residual_rms = (objective(obs, k, theta_pos, theta_neg) / T::from_len(rows_used)).sqrt();
    Ok(FitResult {
        params: CameraParams::new(theta_pos, theta_neg, k)?,
        residual_rms,
        rows_used,
        condition,
    })
}

/// Joint estimate of `θ₊`, `θ₋` and `k ∈ [k_lo, k_hi]`.
///
/// Scans [`K_GRID_POINTS`] log-spaced values, then refines around the best one
/// by golden-section search in `ln k` until the bracket is narrower than
/// [`K_REL_WIDTH`] relative. Returns the best fit seen, so its
/// [`FitResult::normalized_residual`] is never above any grid point's.
pub fn fit_all<T: Scalar>(obs: &ObservationSet<T>, k_lo: T, k_hi: T) -> Result<FitResult<T>> {
    if !(k_lo.is_finite() && k_hi.is_finite() && k_lo > T::zero() && k_lo <= k_hi) {
        return Err(Error::invalid("k range", format!("[{k_lo}, {k_hi}]")));
    }
    if k_lo == k_hi {
        return fit_thresholds_given_k(obs, k_lo);
    }

    let mut best: Option<FitResult<T>> = None;
    let mut score = |k: T| -> Result<T> {
        let fit = fit_thresholds_given_k(obs, k)?;
        let s = fit.normalized_residual();
        if best.is_none_or(|b| s < b.normalized_residual()) {
            best = Some(fit);
        }
        Ok(s)
    };

    let (u_lo, u_hi) = (k_lo.ln(), k_hi.ln());
    let last = T::from_len(K_GRID_POINTS - 1);
    let grid: Vec<T> = (0..K_GRID_POINTS)
        .map(|i| u_lo + (u_hi - u_lo) * T::from_len(i) / last)
        .collect();
    let mut best_i = 0;
    let mut best_s = T::infinity();
    for (i, &u) in grid.iter().enumerate() {
        let s = score(u.exp())?;
        if s < best_s {
            best_s = s;
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(K_GRID_POINTS - 1)];
    golden_section(|u: T| score(u.exp()), lo, hi, T::lit(K_REL_WIDTH.ln_1p()))?;

    Ok(best.expect("grid evaluated at least once"))
}

/// Largest deviation between the analytic gradient of `J` and central finite
/// differences with step `h`, relative to the larger gradient's max-norm.
/// Zero when both gradients vanish.
pub fn objective_gradient_check<T: Scalar>(obs: &ObservationSet<T>, params: &CameraParams<T>, h: T) -> Result<T> {
    if !(h.is_finite() && h > T::zero()) {
        return Err(Error::invalid("finite-difference step", format!("{h}")));
    }
    let (k, tp, tn) = (params.k(), params.theta_pos(), params.theta_neg());
    let analytic = gradient(obs, k, tp, tn);
    let two_h = h + h;
    let numeric = (
        (objective(obs, k, tp + h, tn) - objective(obs, k, tp - h, tn)) / two_h,
        (objective(obs, k, tp, tn + h) - objective(obs, k, tp, tn - h)) / two_h,
    );
    let scale = analytic
        .0
        .abs()
        .max(analytic.1.abs())
        .max(numeric.0.abs())
        .max(numeric.1.abs());
    if scale == T::zero() {
        return Ok(T::zero());
    }
    let dev = (analytic.0 - numeric.0).abs().max((analytic.1 - numeric.1).abs());
    Ok(dev / scale)
}

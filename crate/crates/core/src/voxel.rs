//! Temporally bilinear voxel-grid encoding of an event slice.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Event, EventStream, VoxelGrid};

/// Number of bins used when none is specified.
pub const DEFAULT_BINS: usize = 5;

/// Accumulates the events of `[t0, t1)` into `bins` temporal bins.
///
/// An event at normalized time `t* = (bins - 1)(t - t0)/(t1 - t0)` adds
/// `polarity · max(0, 1 - |b - t*|)` to every bin `b`. With one bin every
/// event lands in bin 0 with weight 1. No normalization is applied.
pub fn encode_voxel_grid<T: Scalar>(stream: &EventStream, t0: u64, t1: u64, bins: usize) -> Result<VoxelGrid<T>> {
    if t0 >= t1 {
        return Err(Error::Interval { t0, t1 });
    }
    if bins == 0 {
        return Err(Error::invalid("bin count", "must be at least 1"));
    }
    let (w, h) = (stream.width(), stream.height());
    let plane = w * h;
    let mut values = vec![T::zero(); bins * plane];
    for ev in stream.slice(t0, t1) {
        let pixel = ev.y as usize * w + ev.x as usize;
        for (bin, weight) in bin_weights::<T>(ev, t0, t1, bins) {
            values[bin * plane + pixel] += weight;
        }
    }
    VoxelGrid::new(bins, w, h, values, t0, t1)
}

/// The (at most two) bins an event touches with their signed weights.
fn bin_weights<T: Scalar>(ev: &Event, t0: u64, t1: u64, bins: usize) -> impl Iterator<Item = (usize, T)> {
    let sign = if ev.polarity.sign() > 0 { T::one() } else { -T::one() };
    let (lo, frac) = if bins == 1 {
        (0, T::zero())
    } else {
        let t_star = T::from_len(bins - 1) * T::lit((ev.t - t0) as f64) / T::lit((t1 - t0) as f64);
        let lo = t_star.floor().to_usize().unwrap_or(0).min(bins - 1);
        (lo, t_star - T::from_len(lo))
    };
    let first = Some((lo, sign * (T::one() - frac)));
    let second = (frac > T::zero() && lo + 1 < bins).then(|| (lo + 1, sign * frac));
    first.into_iter().chain(second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Polarity;
    use proptest::prelude::*;

    fn stream(events: Vec<Event>) -> EventStream {
        EventStream::from_unordered(4, 3, events).unwrap()
    }

    /// Direct evaluation of the kernel over every bin.
    fn kernel_oracle(t: u64, t0: u64, t1: u64, bins: usize) -> Vec<f64> {
        if bins == 1 {
            return vec![1.0];
        }
        let ts = (bins - 1) as f64 * (t - t0) as f64 / (t1 - t0) as f64;
        (0..bins).map(|b| (1.0 - (b as f64 - ts).abs()).max(0.0)).collect()
    }

    #[test]
    fn empty_slice_gives_zero_grid() {
        let g: VoxelGrid<f64> = encode_voxel_grid(&EventStream::empty(4, 3), 0, 100, 5).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert_eq!(g.values().len(), 5 * 12);
    }

    #[test]
    fn midpoint_event_fills_centre_bin() {
        let s = stream(vec![Event::new(50, 1, 2, Polarity::Pos)]);
        let g: VoxelGrid<f64> = encode_voxel_grid(&s, 0, 100, 5).unwrap();
        assert_eq!(g.get(2, 1, 2), 1.0);
        assert_eq!(g.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn split_negative_event() {
        // t* = 4 * 75 / 200 = 1.5
        let s = stream(vec![Event::new(75, 3, 0, Polarity::Neg)]);
        let g: VoxelGrid<f64> = encode_voxel_grid(&s, 0, 200, 5).unwrap();
        assert_eq!(g.get(1, 3, 0), -0.5);
        assert_eq!(g.get(2, 3, 0), -0.5);
        assert_eq!(g.signed_mass(), -1.0);
    }

    #[test]
    fn single_bin_and_interval_membership() {
        let s = stream(vec![
            Event::new(9, 0, 0, Polarity::Pos),
            Event::new(10, 0, 0, Polarity::Pos),
            Event::new(19, 0, 0, Polarity::Neg),
            Event::new(20, 0, 0, Polarity::Pos),
        ]);
        let g: VoxelGrid<f64> = encode_voxel_grid(&s, 10, 20, 1).unwrap();
        assert_eq!(g.get(0, 0, 0), 0.0);
        assert_eq!(g.signed_mass(), 0.0);
        let g: VoxelGrid<f64> = encode_voxel_grid(&s, 10, 21, 3).unwrap();
        assert_eq!(g.signed_mass(), 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = EventStream::empty(1, 1);
        assert!(matches!(
            encode_voxel_grid::<f64>(&s, 5, 5, 5),
            Err(Error::Interval { .. })
        ));
        assert!(encode_voxel_grid::<f64>(&s, 0, 5, 0).is_err());
    }

    fn random_events() -> impl Strategy<Value = Vec<Event>> {
        proptest::collection::vec((0u64..1000, 0u32..4, 0u32..3, any::<bool>()), 0..200).prop_map(|raw| {
            raw.into_iter()
                .map(|(t, x, y, p)| Event::new(t, x, y, if p { Polarity::Pos } else { Polarity::Neg }))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conserves_signed_mass(events in random_events(), bins in 1usize..9, t0 in 0u64..300, len in 1u64..900) {
            let s = stream(events);
            let t1 = t0 + len;
            let g: VoxelGrid<f64> = encode_voxel_grid(&s, t0, t1, bins).unwrap();
            let expected: i32 = s.slice(t0, t1).iter().map(|e| e.polarity.sign()).sum();
            prop_assert!((g.signed_mass() - expected as f64).abs() < 1e-9);
        }

        #[test]
        fn matches_kernel_oracle_and_touches_two_bins(t in 0u64..1000, bins in 1usize..9) {
            let s = stream(vec![Event::new(t, 2, 1, Polarity::Pos)]);
            let g: VoxelGrid<f64> = encode_voxel_grid(&s, 0, 1000, bins).unwrap();
            let oracle = kernel_oracle(t, 0, 1000, bins);
            let mut touched = 0;
            for (b, &want) in oracle.iter().enumerate() {
                prop_assert!((g.get(b, 2, 1) - want).abs() < 1e-12);
                if g.get(b, 2, 1) != 0.0 { touched += 1; }
            }
            prop_assert!(touched <= 2);
        }

        #[test]
        fn linear_in_the_stream(a in random_events(), b in random_events(), bins in 1usize..7) {
            let ga: VoxelGrid<f64> = encode_voxel_grid(&stream(a.clone()), 0, 1000, bins).unwrap();
            let gb: VoxelGrid<f64> = encode_voxel_grid(&stream(b.clone()), 0, 1000, bins).unwrap();
            let joined: Vec<Event> = a.into_iter().chain(b).collect();
            let gab: VoxelGrid<f64> = encode_voxel_grid(&stream(joined), 0, 1000, bins).unwrap();
            for ((x, y), z) in ga.values().iter().zip(gb.values()).zip(gab.values()) {
                prop_assert!((x + y - z).abs() < 1e-9);
            }
        }
    }
}

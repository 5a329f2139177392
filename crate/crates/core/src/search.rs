use crate::scalar::Scalar;

const MAX_ITERS: usize = 200;

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `width` (or after a fixed
/// iteration cap, which only matters when `width` is below the precision of
/// `T`). Returns the best point evaluated and its value. Errors from `f` are
/// propagated.
pub fn golden_section<T, E, F>(mut f: F, lo: T, hi: T, width: T) -> Result<(T, T), E>
where
    T: Scalar,
    F: FnMut(T) -> Result<T, E>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };

    for _ in 0..MAX_ITERS {
        if b - a <= width {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn finds_parabola_minimum() {
        let (x, fx) = golden_section(|x: f64| Ok::<_, Infallible>((x - 1.3).powi(2) + 2.0), -4.0, 7.0, 1e-9).unwrap();
        assert!((x - 1.3).abs() < 1e-8);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn endpoint_minimum_and_reversed_bracket() {
        let (x, _) = golden_section(|x: f64| Ok::<_, Infallible>(x), 3.0, 1.0, 1e-10).unwrap();
        assert!((x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn f32_terminates() {
        let (x, _) = golden_section(|x: f32| Ok::<_, Infallible>((x - 0.5).abs()), 0.0, 1.0, 1e-12).unwrap();
        assert!((x - 0.5).abs() < 1e-5);
    }

    #[test]
    fn propagates_errors() {
        let r = golden_section(|x: f64| if x > 0.5 { Err("boom") } else { Ok(x) }, 0.0, 1.0, 1e-6);
        assert_eq!(r, Err("boom"));
    }
}

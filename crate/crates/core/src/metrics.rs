//! Full-reference image quality: MSE and SSIM.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::Frame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of normalized frames.
pub const SSIM_RANGE: f64 = 1.0;

fn same_dims<T: Scalar>(a: &Frame<T>, b: &Frame<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

pub fn mse<T: Scalar>(a: &Frame<T>, b: &Frame<T>) -> Result<T> {
    same_dims(a, b)?;
    let n = a.pixels().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: T = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / T::from_len(n))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps<T: Scalar>(size: usize, sigma: T) -> Vec<T> {
    let centre = T::from_len(size / 2);
    let two_var = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (0..size)
        .map(|i| {
            let d = T::from_len(i) - centre;
            (-(d * d) / two_var).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering; output is `(w - n + 1) × (h - n + 1)`.
fn filter_valid<T: Scalar>(img: &[T], w: usize, h: usize, taps: &[T]) -> Vec<T> {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let horizontal: Vec<T> = img
        .par_chunks(w)
        .flat_map_iter(|row| (0..ow).map(move |x| row[x..x + n].iter().zip(taps).map(|(&v, &t)| v * t).sum::<T>()))
        .collect();
    (0..oh)
        .into_par_iter()
        .flat_map_iter(|y| {
            let horizontal = &horizontal;
            (0..ow).map(move |x| {
                taps.iter()
                    .enumerate()
                    .map(|(j, &t)| horizontal[(y + j) * ow + x] * t)
                    .sum::<T>()
            })
        })
        .collect()
}

/// Mean SSIM over every valid 11×11 Gaussian-window position (σ = 1.5,
/// `C1 = (0.01 L)²`, `C2 = (0.03 L)²`, `L = 1`).
pub fn ssim<T: Scalar>(a: &Frame<T>, b: &Frame<T>) -> Result<T> {
    same_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(
            "frame size",
            format!("{w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"),
        ));
    }
    let taps = gaussian_taps(SSIM_WINDOW, T::lit(SSIM_SIGMA));
    let (x, y) = (a.pixels(), b.pixels());
    let prod = |f: fn(T, T) -> T| -> Vec<T> { x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect() };
    let mu_x = filter_valid(x, w, h, &taps);
    let mu_y = filter_valid(y, w, h, &taps);
    let xx = filter_valid(&prod(|p, _| p * p), w, h, &taps);
    let yy = filter_valid(&prod(|_, q| q * q), w, h, &taps);
    let xy = filter_valid(&prod(|p, q| p * q), w, h, &taps);

    let c1 = T::lit((SSIM_K1 * SSIM_RANGE).powi(2));
    let c2 = T::lit((SSIM_K2 * SSIM_RANGE).powi(2));
    let two = T::lit(2.0);
    let total: T = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cov = xy[i] - mx * my;
            ((two * mx * my + c1) * (two * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / T::from_len(mu_x.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore<T> {
    pub index: usize,
    pub mse: T,
    pub ssim: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport<T> {
    pub frames: Vec<FrameScore<T>>,
    pub mean_mse: T,
    pub mean_ssim: T,
}

impl<T: Scalar> SequenceReport<T> {
    /// `index,mse,ssim` rows with a header line and a trailing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,mse,ssim\n");
        for s in &self.frames {
            out.push_str(&format!("{},{:.9e},{:.9}\n", s.index, s.mse, s.ssim));
        }
        out.push_str(&format!("mean,{:.9e},{:.9}\n", self.mean_mse, self.mean_ssim));
        out
    }
}

impl<T: Scalar> fmt::Display for SequenceReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>14}  {:>10}", "frame", "mse", "ssim")?;
        for s in &self.frames {
            writeln!(f, "{:>6}  {:>14.6e}  {:>10.6}", s.index, s.mse, s.ssim)?;
        }
        write!(f, "mean   mse={:.6e} ssim={:.6}", self.mean_mse, self.mean_ssim)
    }
}

pub fn evaluate_sequence<T: Scalar>(recon: &[Frame<T>], truth: &[Frame<T>]) -> Result<SequenceReport<T>> {
    if recon.len() != truth.len() {
        return Err(Error::invalid(
            "sequence length",
            format!("{} reconstructed vs {} reference frames", recon.len(), truth.len()),
        ));
    }
    if recon.is_empty() {
        return Err(Error::invalid("sequence length", "no frames to evaluate"));
    }
    let frames = recon
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(index, (r, t))| {
            Ok(FrameScore {
                index,
                mse: mse(r, t)?,
                ssim: ssim(r, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = T::from_len(frames.len());
    let mean_mse = frames.iter().map(|s| s.mse).sum::<T>() / n;
    let mean_ssim = frames.iter().map(|s| s.ssim).sum::<T>() / n;
    Ok(SequenceReport {
        frames,
        mean_mse,
        mean_ssim,
    })
}

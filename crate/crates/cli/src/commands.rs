use std::fs;
use std::path::Path;

use e2v_core::io::{
    read_boundaries, read_events_text, read_frame_dir, write_boundaries, write_events_text, write_frame_dir,
    write_voxel_grid,
};
use e2v_core::{
    build_observations_with, encode_voxel_grid, evaluate_sequence, fit_all, reconstruct_sequence, sample_thresholds,
    simulate_events, CameraParams64, EventStream, Frame64, MovingTexture, RowAnchor, VoxelGrid64,
};

use crate::settings::Settings;
use crate::{CliError, Command};

pub fn dispatch(command: Command, s: &Settings) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            frames,
            events,
            sigma,
            boundaries_out,
        } => simulate(s, &frames, &events, sigma, boundaries_out.as_deref()),
        Command::Reconstruct {
            events,
            keyframes,
            boundaries,
            out,
        } => reconstruct(s, &events, &keyframes, &boundaries, &out),
        Command::Estimate {
            events,
            frames,
            boundaries,
            anchor,
            report,
        } => estimate(s, &events, &frames, boundaries.as_deref(), anchor, report.as_deref()),
        Command::Voxelize {
            events,
            out,
            t0,
            t1,
            normalized,
        } => voxelize(s, &events, &out, t0, t1, normalized),
        Command::Evaluate {
            reconstructed,
            reference,
            csv,
        } => evaluate(s, &reconstructed, &reference, csv.as_deref()),
        Command::Roundtrip { frames, out } => roundtrip(s, &frames, out.as_deref()),
        Command::Synth {
            out,
            frames,
            vx,
            vy,
            low,
            high,
        } => synth(s, &out, frames, (vx, vy), low, high),
    }
}

fn params(s: &Settings) -> Result<CameraParams64, CliError> {
    Ok(CameraParams64::new(s.theta_pos, s.theta_neg, s.k)?)
}

fn load_frames(s: &Settings, dir: &Path) -> Result<Vec<Frame64>, CliError> {
    let frames = read_frame_dir::<f64>(dir, s.frame_interval)?;
    let dims = frames[0].dims();
    if let Some(w) = s.width.filter(|&w| w != dims.0) {
        return Err(CliError::Input(format!(
            "--width {w} but {} holds {}x{} frames",
            dir.display(),
            dims.0,
            dims.1
        )));
    }
    if let Some(h) = s.height.filter(|&h| h != dims.1) {
        return Err(CliError::Input(format!(
            "--height {h} but {} holds {}x{} frames",
            dir.display(),
            dims.0,
            dims.1
        )));
    }
    Ok(frames)
}

fn load_events(path: &Path, width: usize, height: usize) -> Result<EventStream, CliError> {
    let (stream, stats) = read_events_text(path, width, height)?;
    if stats.out_of_order > 0 {
        eprintln!(
            "warning: {} of {} events in {} were out of order and have been re-sorted",
            stats.out_of_order,
            stats.events,
            path.display()
        );
    }
    Ok(stream)
}

fn sensor_size(s: &Settings) -> Result<(usize, usize), CliError> {
    match (s.width, s.height) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(CliError::Input("--width and --height are required here".into())),
    }
}

fn simulate(
    s: &Settings,
    frames_dir: &Path,
    events: &Path,
    sigma: Option<f64>,
    boundaries_out: Option<&Path>,
) -> Result<(), CliError> {
    let frames = load_frames(s, frames_dir)?;
    let params = match sigma {
        Some(sigma) => sample_thresholds(s.seed, s.theta_pos, s.theta_neg, sigma, s.k)?,
        None => params(s)?,
    };
    let stream = simulate_events(&frames, params)?;
    write_events_text(&stream, events)?;
    if let Some(path) = boundaries_out {
        write_boundaries(&frames.iter().map(Frame64::t).collect::<Vec<_>>(), path)?;
    }
    println!(
        "events={} width={} height={} frames={} theta_pos={} theta_neg={} k={}",
        stream.len(),
        stream.width(),
        stream.height(),
        frames.len(),
        params.theta_pos(),
        params.theta_neg(),
        params.k()
    );
    Ok(())
}

fn reconstruct(s: &Settings, events: &Path, keyframes: &Path, boundaries: &Path, out: &Path) -> Result<(), CliError> {
    let keys = load_frames(s, keyframes)?;
    let (w, h) = keys[0].dims();
    let stream = load_events(events, w, h)?;
    let times = read_boundaries(boundaries)?;
    let recon = reconstruct_sequence(&stream, &keys, &times, params(s)?, s.reset_interval)?;
    write_frame_dir(&recon.frames, out)?;
    eprintln!("clamped pixel fraction: {:.6}", recon.overflow_fraction());
    println!("frames={} out={}", recon.frames.len(), out.display());
    Ok(())
}

fn estimate(
    s: &Settings,
    events: &Path,
    frames_dir: &Path,
    boundaries: Option<&Path>,
    anchor: RowAnchor,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let mut frames = load_frames(s, frames_dir)?;
    if let Some(path) = boundaries {
        let times = read_boundaries(path)?;
        if times.len() != frames.len() {
            return Err(CliError::Input(format!(
                "{} boundaries for {} frames",
                times.len(),
                frames.len()
            )));
        }
        frames = frames.into_iter().zip(times).map(|(f, t)| f.with_t(t)).collect();
    }
    let (w, h) = frames[0].dims();
    let stream = load_events(events, w, h)?;
    let obs = build_observations_with(&frames, &stream, s.max_rows, s.seed, anchor)?;
    let fit = fit_all(&obs, s.k_lo, s.k_hi)?;
    println!("{fit}");
    if let Some(path) = report {
        let policy = obs.policy();
        let text = format!(
            "theta_pos={}\ntheta_neg={}\nk={}\nresidual_rms={}\nnormalized_residual={}\nrows={}\nflag={}\n\
             anchor={:?}\ncandidate_rows={}\ncandidate_rows_with_events={}\nmax_rows={}\nseed={}\nk_lo={}\nk_hi={}\n",
            fit.params.theta_pos(),
            fit.params.theta_neg(),
            fit.params.k(),
            fit.residual_rms,
            fit.normalized_residual(),
            fit.rows_used,
            fit.condition,
            policy.anchor,
            policy.candidates,
            policy.candidates_with_events,
            policy.max_rows,
            policy.seed,
            s.k_lo,
            s.k_hi,
        );
        fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn voxelize(s: &Settings, events: &Path, out: &Path, t0: u64, t1: u64, normalized: bool) -> Result<(), CliError> {
    let (w, h) = sensor_size(s)?;
    let stream = load_events(events, w, h)?;
    let grid: VoxelGrid64 = encode_voxel_grid(&stream, t0, t1, s.bins)?;
    let grid = if normalized { grid.normalized() } else { grid };
    write_voxel_grid(&grid, out)?;
    println!(
        "bins={} width={w} height={h} events={} signed_mass={}",
        grid.bins(),
        stream.slice(t0, t1).len(),
        grid.signed_mass()
    );
    Ok(())
}

fn evaluate(s: &Settings, recon_dir: &Path, truth_dir: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let recon = load_frames(s, recon_dir)?;
    let truth = load_frames(s, truth_dir)?;
    let report = evaluate_sequence(&recon, &truth)?;
    println!("{report}");
    if let Some(path) = csv {
        fs::write(path, report.to_csv()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn roundtrip(s: &Settings, frames_dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let frames = load_frames(s, frames_dir)?;
    let params = params(s)?;
    let stream = simulate_events(&frames, params)?;
    let times: Vec<u64> = frames.iter().map(Frame64::t).collect();
    let recon = reconstruct_sequence(&stream, &frames, &times, params, s.reset_interval)?;
    let report = evaluate_sequence(&recon.frames, &frames[1..])?;

    // A reset restarts from a keyframe whose sub-threshold remainder the
    // event stream does not know about, which can double the gap.
    let bound = params.theta_max() * if s.reset_interval == 0 { 1.0 } else { 2.0 };
    let k = params.k();
    let worst = recon
        .frames
        .iter()
        .zip(&frames[1..])
        .flat_map(|(a, b)| a.pixels().iter().zip(b.pixels()))
        .map(|(&x, &y)| ((x + k).ln() - (y + k).ln()).abs())
        .fold(0.0, f64::max);
    if let Some(dir) = out {
        write_frame_dir(&recon.frames, dir)?;
    }
    println!("events={}", stream.len());
    println!("max_log_error={worst:.17} bound={bound}");
    println!("residual_bound: {}", if worst < bound { "PASS" } else { "FAIL" });
    println!("mean_mse={:.6e}", report.mean_mse);
    println!("mean_ssim={:.6}", report.mean_ssim);
    Ok(())
}

fn synth(s: &Settings, out: &Path, frames: usize, velocity: (f64, f64), low: f64, high: f64) -> Result<(), CliError> {
    let texture = MovingTexture {
        width: s.width.unwrap_or(240),
        height: s.height.unwrap_or(180),
        frames,
        interval: s.frame_interval,
        velocity,
        low,
        high,
        seed: s.seed,
        ..MovingTexture::default()
    };
    let seq: Vec<Frame64> = texture.generate()?;
    write_frame_dir(&seq, out)?;
    println!(
        "frames={} width={} height={} out={}",
        seq.len(),
        texture.width,
        texture.height,
        out.display()
    );
    Ok(())
}

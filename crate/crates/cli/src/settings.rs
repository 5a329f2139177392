//! Global options, merged from flags and an optional `key=value` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Sensor width in pixels (inferred from frames where possible)
    #[arg(long, global = true)]
    pub width: Option<usize>,
    /// Sensor height in pixels (inferred from frames where possible)
    #[arg(long, global = true)]
    pub height: Option<usize>,
    /// Positive log-intensity threshold [default: 0.2]
    #[arg(long, global = true)]
    pub theta_pos: Option<f64>,
    /// Negative log-intensity threshold [default: 0.2]
    #[arg(long, global = true)]
    pub theta_neg: Option<f64>,
    /// Intensity offset ratio [default: 0.01]
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Seed for every random draw [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Voxel-grid bins [default: 5]
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Frames between keyframe resets, 0 for free-run [default: 0]
    #[arg(long, global = true)]
    pub reset_interval: Option<usize>,
    /// Maximum estimator rows [default: 100000]
    #[arg(long, global = true)]
    pub max_rows: Option<usize>,
    /// Lower end of the k search range [default: 0.001]
    #[arg(long, global = true)]
    pub k_lo: Option<f64>,
    /// Upper end of the k search range [default: 10]
    #[arg(long, global = true)]
    pub k_hi: Option<f64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Frame spacing in microseconds for directories without timestamps.txt [default: 10000]
    #[arg(long, global = true)]
    pub frame_interval: Option<u64>,
    /// File of `key=value` lines using the long flag names
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Fully resolved options.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub theta_pos: f64,
    pub theta_neg: f64,
    pub k: f64,
    pub seed: u64,
    pub bins: usize,
    pub reset_interval: usize,
    pub max_rows: usize,
    pub k_lo: f64,
    pub k_hi: f64,
    pub threads: Option<usize>,
    pub frame_interval: u64,
}

fn parse_config(path: &Path) -> Result<BTreeMap<String, (usize, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Input(format!(
                "{}:{}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
            return Err(CliError::Input(format!(
                "{}:{}: duplicate key `{key}`",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(entries)
}

struct Merger {
    path: PathBuf,
    file: BTreeMap<String, (usize, String)>,
}

impl Merger {
    /// Takes `key` from the flag or the file. Setting it in both places is an
    /// error unless the values agree.
    fn take<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + PartialEq + std::fmt::Display + Copy,
    {
        let Some((line, raw)) = self.file.remove(key) else {
            return Ok(flag);
        };
        let parsed: T = raw
            .parse()
            .map_err(|_| CliError::Input(format!("{}:{line}: bad value `{raw}` for `{key}`", self.path.display())))?;
        match flag {
            Some(v) if v != parsed => Err(CliError::Input(format!(
                "--{key}={v} conflicts with {key}={parsed} in {}",
                self.path.display()
            ))),
            _ => Ok(Some(parsed)),
        }
    }
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<Settings, CliError> {
        let mut m = Merger {
            path: self.config.clone().unwrap_or_default(),
            file: match &self.config {
                Some(p) => parse_config(p)?,
                None => BTreeMap::new(),
            },
        };
        let settings = Settings {
            width: m.take("width", self.width)?,
            height: m.take("height", self.height)?,
            theta_pos: m.take("theta-pos", self.theta_pos)?.unwrap_or(0.2),
            theta_neg: m.take("theta-neg", self.theta_neg)?.unwrap_or(0.2),
            k: m.take("k", self.k)?.unwrap_or(0.01),
            seed: m.take("seed", self.seed)?.unwrap_or(0),
            bins: m.take("bins", self.bins)?.unwrap_or(e2v_core::voxel::DEFAULT_BINS),
            reset_interval: m.take("reset-interval", self.reset_interval)?.unwrap_or(0),
            max_rows: m.take("max-rows", self.max_rows)?.unwrap_or(100_000),
            k_lo: m.take("k-lo", self.k_lo)?.unwrap_or(1e-3),
            k_hi: m.take("k-hi", self.k_hi)?.unwrap_or(10.0),
            threads: m.take("threads", self.threads)?,
            frame_interval: m.take("frame-interval", self.frame_interval)?.unwrap_or(10_000),
        };
        if let Some(key) = m.file.keys().next() {
            return Err(CliError::Input(format!("{}: unknown key `{key}`", m.path.display())));
        }
        if settings.threads == Some(0) {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        if settings.frame_interval == 0 {
            return Err(CliError::Input("--frame-interval must be positive".into()));
        }
        Ok(settings)
    }
}

//! Flat `key = value` run configuration.
//!
//! Precedence: defaults, then the config file, then command-line flags.
//! Everything is validated before any field storage is allocated.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use vesim_core::constraints::VelocitySpectrum;
use vesim_core::diagnostics::ThresholdConfig;
use vesim_core::dynamics::{RunOptions, Scheme, StepperConfig, DEFAULT_BLOWUP_CEILING, DEFAULT_DRIFT_BUDGET};
use vesim_core::presets::{Preset, PresetParams};
use vesim_core::Grid;

use crate::CliError;

/// Largest accepted grid, in points per field component.
pub const MAX_POINTS: usize = 1 << 24;

/// Where the initial data comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum IcSource {
    Preset(Preset),
    /// Directory holding `v0.vesf` and `E0.vesf`.
    Dir(PathBuf),
}

impl fmt::Display for IcSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IcSource::Preset(p) => write!(f, "{p}"),
            IcSource::Dir(d) => write!(f, "{}", d.display()),
        }
    }
}

impl FromStr for IcSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty initial-data source".into());
        }
        Ok(match s.parse::<Preset>() {
            Ok(p) => IcSource::Preset(p),
            Err(_) => IcSource::Dir(PathBuf::from(s)),
        })
    }
}

/// Initial-data generator parameters shared by `gen-ic`, `run` and `limit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcParams {
    pub seed: u64,
    pub s_end: f64,
    pub steps: usize,
    pub amplitude: f64,
    pub peak_k: u32,
    pub decay: f64,
    pub target_h2: f64,
    pub tolerance: f64,
}

impl Default for IcParams {
    fn default() -> Self {
        let p = PresetParams::default();
        IcParams {
            seed: p.seed,
            s_end: p.s_end,
            steps: p.steps,
            amplitude: p.spectrum.amplitude,
            peak_k: p.spectrum.peak_k,
            decay: p.spectrum.decay,
            target_h2: p.target_h2_sq,
            tolerance: p.tolerance,
        }
    }
}

impl IcParams {
    pub fn preset_params(&self, mu: f64) -> PresetParams {
        PresetParams {
            seed: self.seed,
            s_end: self.s_end,
            steps: self.steps,
            spectrum: VelocitySpectrum {
                amplitude: self.amplitude,
                peak_k: self.peak_k,
                decay: self.decay,
            },
            mu,
            target_h2_sq: self.target_h2,
            tolerance: self.tolerance,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check("s_end", self.s_end >= 0.0 && self.s_end.is_finite(), || {
            format!("must be finite and non-negative, got {}", self.s_end)
        })?;
        check("steps", self.s_end == 0.0 || self.steps >= 1, || {
            "must be at least 1 when s_end > 0".into()
        })?;
        check("amplitude", self.amplitude > 0.0 && self.amplitude.is_finite(), || {
            format!("must be positive, got {}", self.amplitude)
        })?;
        check("peak_k", self.peak_k >= 1, || "must be at least 1".into())?;
        check("decay", self.decay > 0.0 && self.decay.is_finite(), || {
            format!("must be positive, got {}", self.decay)
        })?;
        check("target_h2", self.target_h2 > 0.0 && self.target_h2.is_finite(), || {
            format!("must be positive, got {}", self.target_h2)
        })?;
        check("tolerance", self.tolerance > 0.0, || {
            format!("must be positive, got {}", self.tolerance)
        })
    }

    /// Returns `false` when `key` is not an initial-data key.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "s_end" => self.s_end = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "amplitude" => self.amplitude = parse(key, value)?,
            "peak_k" => self.peak_k = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "target_h2" => self.target_h2 = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub mu: f64,
    pub t_end: f64,
    pub dt: Option<f64>,
    pub cfl: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    pub conservative_stress: bool,
    pub fluid_only: bool,
    pub c_threshold: f64,
    pub ic: IcSource,
    pub ic_params: IcParams,
    pub out: PathBuf,
    pub diag_every: usize,
    pub snapshot_every: usize,
    pub drift_budget: f64,
    pub blowup_ceiling: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let st = StepperConfig::default();
        RunConfig {
            dim: 2,
            n: 64,
            mu: 1.0,
            t_end: 1.0,
            dt: st.dt,
            cfl: st.cfl,
            dt_max: st.dt_max,
            scheme: st.scheme,
            dealias: st.dealias,
            conservative_stress: st.conservative_stress,
            fluid_only: st.fluid_only,
            c_threshold: ThresholdConfig::default().c_big,
            ic: IcSource::Preset(Preset::SmallData),
            ic_params: IcParams::default(),
            out: PathBuf::from("out"),
            diag_every: 10,
            snapshot_every: 0,
            drift_budget: DEFAULT_DRIFT_BUDGET,
            blowup_ceiling: DEFAULT_BLOWUP_CEILING,
        }
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if self.ic_params.set(key, value)? {
            return Ok(());
        }
        match key {
            "dim" => self.dim = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "t_end" => self.t_end = parse(key, value)?,
            "dt" => {
                self.dt = match value {
                    "auto" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "cfl" => self.cfl = parse(key, value)?,
            "dt_max" => self.dt_max = parse(key, value)?,
            "scheme" => self.scheme = parse(key, value)?,
            "dealias" => self.dealias = parse(key, value)?,
            "conservative_stress" => self.conservative_stress = parse(key, value)?,
            "fluid_only" => self.fluid_only = parse(key, value)?,
            "c_threshold" => self.c_threshold = parse(key, value)?,
            "ic" => self.ic = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "diag_every" => self.diag_every = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            "drift_budget" => self.drift_budget = parse(key, value)?,
            "blowup_ceiling" => self.blowup_ceiling = parse(key, value)?,
            _ => {
                return Err(CliError::Config {
                    key: key.to_string(),
                    reason: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (key, value) in parse_pairs(&text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        validate_grid(self.dim, self.n)?;
        check("mu", self.mu > 0.0 && self.mu.is_finite(), || {
            format!("must be positive and finite, got {}", self.mu)
        })?;
        check("t_end", self.t_end >= 0.0 && self.t_end.is_finite(), || {
            format!("must be finite and non-negative, got {}", self.t_end)
        })?;
        self.stepper().validate().map_err(|e| match e {
            vesim_core::dynamics::DynamicsError::InvalidConfig { key, reason } => CliError::Config {
                key: key.to_string(),
                reason,
            },
            other => CliError::Usage(other.to_string()),
        })?;
        check("c_threshold", self.c_threshold > 0.0 && self.c_threshold.is_finite(), || {
            format!("must be positive, got {}", self.c_threshold)
        })?;
        check("diag_every", self.diag_every >= 1, || "must be at least 1".into())?;
        check("drift_budget", self.drift_budget > 0.0, || {
            format!("must be positive, got {}", self.drift_budget)
        })?;
        check("blowup_ceiling", self.blowup_ceiling > 0.0, || {
            format!("must be positive, got {}", self.blowup_ceiling)
        })?;
        self.ic_params.validate()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dim, self.n).expect("validated grid")
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            cfl: self.cfl,
            dt_max: self.dt_max,
            scheme: self.scheme,
            dealias: self.dealias,
            conservative_stress: self.conservative_stress,
            fluid_only: self.fluid_only,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            diag_every: self.diag_every,
            snapshot_every: self.snapshot_every,
            threshold: ThresholdConfig::with_c(self.c_threshold),
            drift_budget: self.drift_budget,
            blowup_ceiling: self.blowup_ceiling,
            dealias_initial: self.dealias,
        }
    }
}

pub fn validate_grid(dim: usize, n: usize) -> Result<(), CliError> {
    check("dim", dim == 2 || dim == 3, || format!("must be 2 or 3, got {dim}"))?;
    check("n", n >= 8 && n.is_power_of_two(), || {
        format!("must be a power of two of at least 8, got {n}")
    })?;
    let points = n.checked_pow(dim as u32).unwrap_or(usize::MAX);
    check("n", points <= MAX_POINTS, || {
        format!("grid of {n}^{dim} points exceeds the limit of {MAX_POINTS}")
    })
}

fn check(key: &str, ok: bool, reason: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config {
            key: key.to_string(),
            reason: reason(),
        })
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| CliError::Config {
        key: key.to_string(),
        reason: format!("cannot parse '{value}': {e}"),
    })
}

/// `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
            key: format!("line {}", i + 1),
            reason: format!("expected key = value, got '{line}'"),
        })?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::Config {
                key: format!("line {}", i + 1),
                reason: "empty key".into(),
            });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

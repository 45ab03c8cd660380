//! Experiment configuration.
//!
//! A TOML file with a few top-level run settings and one table per
//! component. Every physical quantity is in lattice units (`dx = dt = 1`).
//! Missing keys take the defaults below.

use std::path::{Path, PathBuf};

use pursuit_core::episode::default_max_steps;
use pursuit_core::{DetectionModel, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Which target and odor dynamics the experiments use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub side: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { side: 51 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdorConfig {
    /// lambda
    pub decay_length: f64,
    /// Emission rate R on the lattice.
    pub emission_rate: f64,
    /// Mean number of live tracers `R tau_d` in the continuous environment;
    /// the emission rate there is this divided by `tau_d`.
    pub particles: f64,
}

impl Default for OdorConfig {
    fn default() -> Self {
        Self {
            decay_length: 3.0,
            emission_rate: 1.0,
            particles: 36.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// Swimming speed U of the continuous target.
    pub speed: f64,
    /// Odor emission sub-step of the continuous target.
    pub substep: f64,
    /// Length of the calibration trajectory, in sensing intervals.
    pub trajectory_steps: usize,
    /// Block-bootstrap resamples reported by `calibrate`.
    pub bootstrap: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            substep: 0.1,
            trajectory_steps: 10_000_000,
            bootstrap: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpConfig {
    pub gamma: f64,
    pub tolerance: f64,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            gamma: pursuit_core::policy::DEFAULT_GAMMA,
            tolerance: pursuit_core::policy::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Persistence times: `tau_p` on the lattice, mean run time off it.
    pub persistence_times: Vec<f64>,
    pub weights: Vec<f64>,
    /// Tumble probabilities of the random-walk baseline.
    pub alphas: Vec<f64>,
    /// `U tau_d / lambda` values (continuous environment only).
    pub speed_ratios: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            persistence_times: vec![2.0, 5.0, 10.0, 25.0],
            weights: (0..=10).map(|k| k as f64 / 10.0).collect(),
            alphas: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            speed_ratios: vec![0.1],
        }
    }
}

/// Everything an experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentKind,
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Q-table and transition-matrix cache; defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Build missing caches instead of failing.
    pub auto_build: bool,
    /// Step cap per episode; defaults to `20 L^2`.
    pub max_steps: Option<usize>,
    /// Also write one CSV of episode records per sweep point.
    pub per_episode: bool,
    /// Also write one CCDF table per sweep point.
    pub ccdf: bool,
    /// Also write `summary.json`.
    pub json: bool,
    pub grid: GridConfig,
    pub odor: OdorConfig,
    pub target: TargetConfig,
    pub mdp: MdpConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentKind::Discrete,
            episodes: 10_000,
            seed: 1,
            jobs: 0,
            out: PathBuf::from("out"),
            cache_dir: None,
            auto_build: false,
            max_steps: None,
            per_episode: false,
            ccdf: false,
            json: false,
            grid: GridConfig::default(),
            odor: OdorConfig::default(),
            target: TargetConfig::default(),
            mdp: MdpConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(CliError::Config(format!("sweep list `{name}` is empty")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.side < 5 || self.grid.side % 2 == 0 {
            return Err(CliError::Config(format!(
                "grid side must be odd and at least 5, got {}",
                self.grid.side
            )));
        }
        if self.episodes == 0 {
            return Err(CliError::Config("episodes must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(CliError::Config("max_steps must be at least 1".into()));
        }
        positive("odor.decay_length", self.odor.decay_length)?;
        positive("odor.emission_rate", self.odor.emission_rate)?;
        positive("odor.particles", self.odor.particles)?;
        positive("target.speed", self.target.speed)?;
        positive("target.substep", self.target.substep)?;
        if !(self.mdp.gamma > 0.0 && self.mdp.gamma < 1.0) {
            return Err(CliError::Config(format!("mdp.gamma must lie in (0, 1), got {}", self.mdp.gamma)));
        }
        positive("mdp.tolerance", self.mdp.tolerance)?;
        let s = &self.sweep;
        non_empty("persistence_times", &s.persistence_times)?;
        non_empty("weights", &s.weights)?;
        non_empty("alphas", &s.alphas)?;
        non_empty("speed_ratios", &s.speed_ratios)?;
        for &t in &s.persistence_times {
            match self.environment {
                EnvironmentKind::Discrete if !(t > 1.0 && t.is_finite()) => {
                    return Err(CliError::Config(format!(
                        "lattice persistence time must exceed 1, got {t}"
                    )))
                }
                EnvironmentKind::Continuous => positive("persistence time", t)?,
                _ => {}
            }
        }
        for &w in &s.weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(CliError::Config(format!("weight must lie in [0, 1], got {w}")));
            }
        }
        for &a in &s.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CliError::Config(format!("alpha must lie in (0, 1], got {a}")));
            }
        }
        for &r in &s.speed_ratios {
            positive("speed ratio", r)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::unit(self.grid.side).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn max_steps(&self, grid: &GridSpec) -> usize {
        self.max_steps.unwrap_or_else(|| default_max_steps(grid))
    }

    /// Detection model of the lattice environment.
    pub fn lattice_model(&self) -> Result<DetectionModel, CliError> {
        DetectionModel::lattice(self.odor.decay_length, self.odor.emission_rate)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Detection model of the continuous environment at `U tau_d / lambda = ratio`.
    pub fn continuous_model(&self, ratio: f64) -> Result<DetectionModel, CliError> {
        let tau_d = ratio * self.odor.decay_length / self.target.speed;
        DetectionModel::new(self.odor.decay_length, self.odor.particles / tau_d, tau_d, 1.0, 1.0)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Speed ratios to sweep; the lattice has a single, implicit one.
    pub fn speed_ratios(&self) -> Vec<Option<f64>> {
        match self.environment {
            EnvironmentKind::Discrete => vec![None],
            EnvironmentKind::Continuous => self.sweep.speed_ratios.iter().map(|&r| Some(r)).collect(),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// Comment lines written at the top of every output CSV.
    pub fn provenance(&self, command: &str) -> Vec<String> {
        vec![
            format!("pursuit {} ({command})", crate::VERSION),
            format!("config_sha256 {}", self.hash()),
        ]
    }
}

//! Odor environment.
//!
//! The agent's detection model treats the odor field as the steady
//! mean-concentration solution around the instantaneous source position,
//!
//! ```text
//! <theta>(r) = R tau_d / (2 pi lambda^2) K0(r / lambda),    lambda^2 = kappa tau_d
//! ```
//!
//! and turns it into per-step detection probabilities in one of two ways:
//!
//! * Smoluchowski hit rate, `mu = 2 pi kappa dt / ln(2 lambda / dx) <theta>`,
//!   with `L(detection) = 1 - exp(-mu)`. Used as the true generative model on
//!   the lattice.
//! * Cell occupancy, `L(detection) = 1 - exp(-dx^2 <theta>)`. Used by the agent
//!   when the odor is carried by explicit particles ([`cloud`]).

pub mod bessel;
pub mod cloud;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bessel::bessel_k0;
pub use cloud::{sample_observation_continuous, OdorParticle, ParticleCloud};

use crate::error::{Error, Result};
use crate::grid::{within_capture, Displacement, GridSpec, LatticePoint, CAPTURE_RADIUS};

/// Outcome of one sensing event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    NoDetection,
    Detection,
    Found,
}

/// Physical parameters of the odor plume and the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    decay_length: f64,
    emission_rate: f64,
    decay_time: f64,
    diffusivity: f64,
    spacing: f64,
    interval: f64,
}

impl DetectionModel {
    /// Diffusivity follows from `kappa = lambda^2 / tau_d`.
    pub fn new(
        decay_length: f64,
        emission_rate: f64,
        decay_time: f64,
        spacing: f64,
        interval: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("decay length", decay_length),
            ("emission rate", emission_rate),
            ("decay time", decay_time),
            ("spacing", spacing),
            ("sensing interval", interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if 2.0 * decay_length <= spacing {
            return Err(Error::InvalidParameter(format!(
                "decay length {decay_length} must exceed half the spacing {spacing}"
            )));
        }
        Ok(Self {
            decay_length,
            emission_rate,
            decay_time,
            diffusivity: decay_length * decay_length / decay_time,
            spacing,
            interval,
        })
    }

    /// Lattice defaults for a plume of decay length `lambda` and rate `R`
    /// (unit spacing and interval). The hit rate does not depend on `tau_d`.
    pub fn lattice(decay_length: f64, emission_rate: f64) -> Result<Self> {
        Self::new(decay_length, emission_rate, decay_length * decay_length, 1.0, 1.0)
    }

    pub fn decay_length(&self) -> f64 {
        self.decay_length
    }
    pub fn emission_rate(&self) -> f64 {
        self.emission_rate
    }
    pub fn decay_time(&self) -> f64 {
        self.decay_time
    }
    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Mean number of live particles, `R tau_d`.
    pub fn mean_particle_count(&self) -> f64 {
        self.emission_rate * self.decay_time
    }

    /// `U tau_d / lambda`; the steady-field approximation needs this to be small.
    pub fn quasi_static_ratio(&self, speed: f64) -> f64 {
        speed * self.decay_time / self.decay_length
    }

    /// Steady mean concentration at physical distance `r > 0` from the source.
    pub fn concentration_at(&self, r: f64) -> Result<f64> {
        let k0 = bessel_k0(r / self.decay_length)?;
        Ok(self.emission_rate * self.decay_time / (2.0 * PI * self.decay_length.powi(2)) * k0)
    }

    pub fn mean_concentration(&self, d: Displacement) -> Result<f64> {
        if d.is_zero() {
            return Err(Error::ZeroDisplacement);
        }
        self.concentration_at(d.norm() * self.spacing)
    }

    /// Expected number of particles caught during one sensing interval.
    pub fn hit_rate(&self, d: Displacement) -> Result<f64> {
        let prefactor = 2.0 * PI * self.diffusivity * self.interval
            / (2.0 * self.decay_length / self.spacing).ln();
        Ok(prefactor * self.mean_concentration(d)?)
    }

    /// `(L(no-detection), L(detection))` under the hit-rate model.
    pub fn detection_likelihood(&self, d: Displacement) -> Result<(f64, f64)> {
        Ok(bernoulli_from_rate(self.hit_rate(d)?))
    }

    /// Likelihood pair the agent uses when odor is carried by particles.
    pub fn approx_likelihood_continuous(&self, d: Displacement) -> Result<(f64, f64)> {
        Ok(bernoulli_from_rate(self.spacing * self.spacing * self.mean_concentration(d)?))
    }
}

/// `(exp(-rate), 1 - exp(-rate))`; the pair sums to one.
pub fn bernoulli_from_rate(rate: f64) -> (f64, f64) {
    let yes = -(-rate).exp_m1();
    (1.0 - yes, yes)
}

/// Which detection law a likelihood table encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LikelihoodKind {
    HitRate,
    CellOccupancy,
}

/// Detection likelihood for every displacement `agent - target` of a grid.
///
/// The zero displacement has no defined likelihood; its entry is zero and it
/// is only ever multiplied by belief that the capture zeroing already cleared.
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    side: usize,
    kind: LikelihoodKind,
    yes: Vec<f64>,
    no: Vec<f64>,
    yes_log2: Vec<f64>,
    no_log2: Vec<f64>,
}

fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

impl LikelihoodTable {
    pub fn new(model: &DetectionModel, grid: &GridSpec, kind: LikelihoodKind) -> Result<Self> {
        let n = grid.cells();
        let mut yes = vec![0.0; n];
        let mut no = vec![0.0; n];
        for (k, d) in grid.displacements().enumerate() {
            if d.is_zero() {
                continue;
            }
            let (l0, l1) = match kind {
                LikelihoodKind::HitRate => model.detection_likelihood(d)?,
                LikelihoodKind::CellOccupancy => model.approx_likelihood_continuous(d)?,
            };
            no[k] = l0;
            yes[k] = l1;
        }
        Ok(Self {
            side: grid.side(),
            kind,
            yes_log2: yes.iter().map(|&p| xlog2x(p)).collect(),
            no_log2: no.iter().map(|&p| xlog2x(p)).collect(),
            yes,
            no,
        })
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Likelihood of `obs` at table index `k` (see [`GridSpec::displacement_index`]).
    #[inline]
    pub fn at(&self, obs: Observation, k: usize) -> f64 {
        match obs {
            Observation::Detection => self.yes[k],
            Observation::NoDetection => self.no[k],
            Observation::Found => 0.0,
        }
    }

    /// `L log2 L` at table index `k`.
    #[inline]
    pub fn xlog2x_at(&self, obs: Observation, k: usize) -> f64 {
        match obs {
            Observation::Detection => self.yes_log2[k],
            Observation::NoDetection => self.no_log2[k],
            Observation::Found => 0.0,
        }
    }

    pub fn detection_probability(&self, grid: &GridSpec, d: Displacement) -> f64 {
        self.yes[grid.displacement_index(d)]
    }

    /// All likelihoods of `obs`, indexed by displacement index.
    pub fn values(&self, obs: Observation) -> &[f64] {
        match obs {
            Observation::Detection => &self.yes,
            Observation::NoDetection => &self.no,
            Observation::Found => &[],
        }
    }

    /// All `L log2 L` values of `obs`, indexed by displacement index.
    pub fn xlog2x_values(&self, obs: Observation) -> &[f64] {
        match obs {
            Observation::Detection => &self.yes_log2,
            Observation::NoDetection => &self.no_log2,
            Observation::Found => &[],
        }
    }

    /// Likelihood of `obs` for every candidate target position, given the
    /// agent position; indexed like the lattice.
    pub fn map(&self, grid: &GridSpec, obs: Observation, agent: LatticePoint) -> Vec<f64> {
        let values = self.values(obs);
        let mut out = Vec::with_capacity(grid.cells());
        grid.for_each_offset(agent, |_, d| out.push(values.get(d).copied().unwrap_or(0.0)));
        out
    }
}

/// Draw the agent's observation on the lattice: `Found` within the capture
/// radius, otherwise a Bernoulli detection with the tabulated probability.
pub fn sample_observation_discrete<R: Rng + ?Sized>(
    agent: LatticePoint,
    target: LatticePoint,
    table: &LikelihoodTable,
    grid: &GridSpec,
    rng: &mut R,
) -> Observation {
    let d = grid.min_image(agent, target);
    if within_capture(d, CAPTURE_RADIUS, 1.0) {
        return Observation::Found;
    }
    if rng.random::<f64>() < table.detection_probability(grid, d) {
        Observation::Detection
    } else {
        Observation::NoDetection
    }
}

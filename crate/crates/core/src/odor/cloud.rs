//! Lagrangian odor tracers.
//!
//! The source emits a Poisson number of particles per sub-step at its
//! instantaneous position. Each particle diffuses with diffusivity `kappa` and
//! dies after an exponential lifetime of mean `tau_d`. Emission times are
//! uniform inside each sub-step and newly emitted particles diffuse only for the
//! remainder of it, so the particle field at sub-step boundaries is exact in
//! distribution.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};

use super::{DetectionModel, Observation};
use crate::grid::{GridSpec, LatticePoint};
use crate::target::{ContinuousRtParams, ContinuousTarget, Segment, SourcePath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdorParticle {
    pub x: f64,
    pub y: f64,
    pub death_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleCloud {
    pub particles: Vec<OdorParticle>,
    pub time: f64,
}

impl ParticleCloud {
    pub fn new(time: f64) -> Self {
        Self {
            particles: Vec::new(),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Advance the cloud along `path` in sub-steps of at most `dt`.
    ///
    /// `domain` is the periodic box side in physical units.
    pub fn evolve<R: Rng + ?Sized>(
        &mut self,
        path: &SourcePath,
        model: &DetectionModel,
        dt: f64,
        domain: f64,
        rng: &mut R,
    ) {
        let end = path.end();
        let steps = ((end - self.time) / dt).ceil().max(0.0) as usize;
        if steps == 0 {
            return;
        }
        let h = (end - self.time) / steps as f64;
        let lifetime = Exp::new(1.0 / model.decay_time()).expect("positive decay time");
        let emitted = Poisson::new(model.emission_rate() * h).expect("positive emission");
        let kappa = model.diffusivity();
        let step_noise = Normal::new(0.0, (2.0 * kappa * h).sqrt()).expect("finite noise");
        for _ in 0..steps {
            let t0 = self.time;
            let t1 = t0 + h;
            self.particles.retain(|p| p.death_time > t1);
            if kappa > 0.0 {
                for p in &mut self.particles {
                    p.x = (p.x + step_noise.sample(rng)).rem_euclid(domain);
                    p.y = (p.y + step_noise.sample(rng)).rem_euclid(domain);
                }
            }
            let k = emitted.sample(rng) as usize;
            for _ in 0..k {
                let te = t0 + rng.random::<f64>() * h;
                let death_time = te + lifetime.sample(rng);
                if death_time <= t1 {
                    continue;
                }
                let (mut x, mut y) = path.position_at(te);
                let rest = t1 - te;
                if kappa > 0.0 && rest > 0.0 {
                    let s = (2.0 * kappa * rest).sqrt();
                    let dx: f64 = StandardNormal.sample(rng);
                    let dy: f64 = StandardNormal.sample(rng);
                    x += s * dx;
                    y += s * dy;
                }
                self.particles.push(OdorParticle {
                    x: x.rem_euclid(domain),
                    y: y.rem_euclid(domain),
                    death_time,
                });
            }
            self.time = t1;
        }
    }

    /// Cloud accumulated while the source ran for `duration` before arriving
    /// at its current state. The earlier path is drawn from the time-reversed
    /// run-and-tumble, which has the same law as the forward one.
    pub fn prewarmed<R: Rng + ?Sized>(
        target: &ContinuousTarget,
        params: &ContinuousRtParams,
        model: &DetectionModel,
        duration: f64,
        domain: f64,
        rng: &mut R,
    ) -> Self {
        let start = target.time - duration;
        let mut cloud = Self::new(start);
        if duration <= 0.0 {
            return cloud;
        }
        // Walk backwards from the present, then replay forwards.
        let mut pieces = Vec::new();
        let (mut x, mut y) = (target.x, target.y);
        let mut heading = target.heading;
        let mut t = target.time;
        while t > start {
            let run = if params.mean_run_time.is_infinite() {
                f64::INFINITY
            } else {
                Exp::new(1.0 / params.mean_run_time).expect("positive").sample(rng)
            };
            let t0 = (t - run).max(start);
            let (vx, vy) = (params.speed * heading.cos(), params.speed * heading.sin());
            let x0 = x - vx * (t - t0);
            let y0 = y - vy * (t - t0);
            pieces.push(Segment {
                t0,
                t1: t,
                x0,
                y0,
                vx,
                vy,
            });
            x = x0;
            y = y0;
            t = t0;
            heading = rng.random::<f64>() * TAU;
        }
        pieces.reverse();
        let path = SourcePath { segments: pieces };
        cloud.evolve(&path, model, params.substep, domain, rng);
        cloud.time = target.time;
        cloud
    }
}

/// Periodic distance between two points of the box.
fn periodic_distance_sq(ax: f64, ay: f64, bx: f64, by: f64, domain: f64) -> f64 {
    let mut dx = (ax - bx).abs() % domain;
    let mut dy = (ay - by).abs() % domain;
    dx = dx.min(domain - dx);
    dy = dy.min(domain - dy);
    dx * dx + dy * dy
}

/// Detection iff a live particle lies within `radius` (closed ball) of the
/// center of the agent's cell.
pub fn sample_observation_continuous(
    agent: LatticePoint,
    cloud: &ParticleCloud,
    radius: f64,
    grid: &GridSpec,
) -> Observation {
    let h = grid.spacing();
    let domain = grid.side() as f64 * h;
    let (cx, cy) = cell_center(agent, grid);
    let r2 = radius * radius;
    if cloud
        .particles
        .iter()
        .any(|p| periodic_distance_sq(p.x, p.y, cx, cy, domain) <= r2)
    {
        Observation::Detection
    } else {
        Observation::NoDetection
    }
}

/// Physical coordinates of the center of a lattice cell.
pub fn cell_center(p: LatticePoint, grid: &GridSpec) -> (f64, f64) {
    let h = grid.spacing();
    ((p.i as f64 + 0.5) * h, (p.j as f64 + 0.5) * h)
}

/// Periodic distance from the center of the agent's cell to an off-lattice point.
pub fn distance_to_cell(p: LatticePoint, x: f64, y: f64, grid: &GridSpec) -> f64 {
    let (cx, cy) = cell_center(p, grid);
    periodic_distance_sq(cx, cy, x, y, grid.side() as f64 * grid.spacing()).sqrt()
}

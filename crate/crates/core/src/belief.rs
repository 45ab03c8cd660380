//! Joint belief over target position and velocity.
//!
//! Storage is dense and velocity-major: `probs[u * L^2 + x]`, with `x` the
//! row-major lattice index. One agent step applies, in order: [`Belief::predict`]
//! under the motion model, [`Belief::zero_capture_and_renormalize`] at the new
//! agent position (conditioning on "not found"), and [`Belief::bayes_update`]
//! with the odor observation made there.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{capture_offsets, Action, GridSpec, LatticePoint};
use crate::odor::{LikelihoodTable, Observation};
use crate::target::{Alphabet, TransitionMatrix};

/// Collapse threshold on the capture-zone mass.
pub const COLLAPSE_THRESHOLD: f64 = 1.0 - 1e-12;

/// Smallest observation evidence accepted by the Bayes update.
pub const MIN_EVIDENCE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    side: usize,
    alphabet: Alphabet,
    probs: Vec<f64>,
}

/// What one observation step did to the belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefUpdateTrace {
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub observation: Observation,
    /// Mass removed from the capture zone before the Bayes update.
    pub capture_mass: f64,
    /// Probability of the observation under the zeroed belief.
    pub evidence: f64,
}

#[inline]
fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

impl Belief {
    /// Wrap raw nonnegative weights, normalizing them.
    pub fn from_weights(grid: &GridSpec, alphabet: Alphabet, mut probs: Vec<f64>) -> Result<Self> {
        let expected = grid.cells() * alphabet.len();
        if probs.len() != expected {
            return Err(Error::AlphabetMismatch {
                expected,
                found: probs.len(),
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("belief weights must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("belief weights sum to zero".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self {
            side: grid.side(),
            alphabet,
            probs,
        })
    }

    pub fn point_mass(grid: &GridSpec, alphabet: Alphabet, x: LatticePoint, u: usize) -> Self {
        let mut probs = vec![0.0; grid.cells() * alphabet.len()];
        probs[u * grid.cells() + grid.index(x)] = 1.0;
        Self {
            side: grid.side(),
            alphabet,
            probs,
        }
    }

    pub fn uniform(grid: &GridSpec, alphabet: Alphabet) -> Self {
        let n = grid.cells() * alphabet.len();
        Self {
            side: grid.side(),
            alphabet,
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Product of a position weight map and a velocity distribution.
    pub fn product(grid: &GridSpec, alphabet: Alphabet, position: &[f64], velocity: &[f64]) -> Result<Self> {
        if velocity.len() != alphabet.len() {
            return Err(Error::AlphabetMismatch {
                expected: alphabet.len(),
                found: velocity.len(),
            });
        }
        let mut probs = Vec::with_capacity(grid.cells() * alphabet.len());
        for &qu in velocity {
            probs.extend(position.iter().map(|&w| w * qu));
        }
        Self::from_weights(grid, alphabet, probs)
    }

    /// Belief right after a detection at `agent`: detection likelihood times
    /// the stationary velocity law, zero inside the capture zone.
    pub fn initial(
        agent: LatticePoint,
        table: &LikelihoodTable,
        q: &[f64],
        grid: &GridSpec,
        alphabet: Alphabet,
    ) -> Result<Self> {
        let mut position = table.map(grid, Observation::Detection, agent);
        for p in grid.capture_neighborhood(agent) {
            position[grid.index(p)] = 0.0;
        }
        if !(position.iter().sum::<f64>() > 0.0) {
            return Err(Error::DegenerateLikelihood);
        }
        Self::product(grid, alphabet, &position, q)
    }

    /// Uniform over positions outside the capture zone, times `q`.
    pub fn uniform_outside_capture(
        agent: LatticePoint,
        q: &[f64],
        grid: &GridSpec,
        alphabet: Alphabet,
    ) -> Result<Self> {
        let mut position = vec![1.0; grid.cells()];
        for p in grid.capture_neighborhood(agent) {
            position[grid.index(p)] = 0.0;
        }
        Self::product(grid, alphabet, &position, q)
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    fn cells(&self) -> usize {
        self.side * self.side
    }

    pub fn get(&self, grid: &GridSpec, x: LatticePoint, u: usize) -> f64 {
        self.probs[u * self.cells() + grid.index(x)]
    }

    /// Velocity slice `u`, indexed like the lattice.
    pub fn slice(&self, u: usize) -> &[f64] {
        let c = self.cells();
        &self.probs[u * c..(u + 1) * c]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn position_marginal(&self) -> Vec<f64> {
        let c = self.cells();
        let mut m = vec![0.0; c];
        for slice in self.probs.chunks_exact(c) {
            for (mi, &p) in m.iter_mut().zip(slice) {
                *mi += p;
            }
        }
        m
    }

    pub fn velocity_marginal(&self) -> Vec<f64> {
        self.probs.chunks_exact(self.cells()).map(|s| s.iter().sum()).collect()
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.side() != self.side {
            return Err(Error::InvalidParameter(format!(
                "belief lives on a side-{} lattice, got side {}",
                self.side,
                grid.side()
            )));
        }
        Ok(())
    }

    /// Transport under the target dynamics:
    /// `b'(x', u') = sum_u P(u'|u) b(x' - u, u)`.
    pub fn predict(&self, p: &TransitionMatrix, grid: &GridSpec) -> Result<Belief> {
        if p.alphabet() != self.alphabet {
            return Err(Error::AlphabetMismatch {
                expected: self.alphabet.len(),
                found: p.len(),
            });
        }
        self.check_grid(grid)?;
        let c = self.cells();
        let n = self.alphabet.len();
        let mut shifted = vec![0.0; c * n];
        for u in 0..n {
            let (vi, vj) = self.alphabet.velocity(u);
            roll(self.slice(u), &mut shifted[u * c..(u + 1) * c], self.side, vi, vj);
        }
        let mut out = vec![0.0; c * n];
        for to in 0..n {
            let dst = &mut out[to * c..(to + 1) * c];
            for from in 0..n {
                let w = p.prob(to, from);
                if w == 0.0 {
                    continue;
                }
                for (d, &s) in dst.iter_mut().zip(&shifted[from * c..(from + 1) * c]) {
                    *d += w * s;
                }
            }
        }
        Ok(Belief {
            side: self.side,
            alphabet: self.alphabet,
            probs: out,
        })
    }

    /// Probability mass inside the capture zone of `agent`.
    pub fn capture_mass(&self, agent: LatticePoint, grid: &GridSpec) -> f64 {
        let c = self.cells();
        let cells: Vec<usize> = grid.capture_neighborhood(agent).iter().map(|&p| grid.index(p)).collect();
        (0..self.alphabet.len())
            .map(|u| cells.iter().map(|&k| self.probs[u * c + k]).sum::<f64>())
            .sum()
    }

    /// Condition on "target not within reach of `agent`". Returns the removed
    /// mass `p_f`. On collapse (`p_f` numerically one) the belief is untouched.
    pub fn zero_capture_and_renormalize(&mut self, agent: LatticePoint, grid: &GridSpec) -> Result<f64> {
        self.check_grid(grid)?;
        let total = self.total();
        let removed = self.capture_mass(agent, grid);
        let p_f = removed / total;
        if p_f >= COLLAPSE_THRESHOLD || !(total - removed > 0.0) {
            return Err(Error::BeliefCollapse(p_f));
        }
        if removed == 0.0 && (total - 1.0).abs() <= 1e-12 {
            return Ok(0.0);
        }
        let c = self.cells();
        for p in grid.capture_neighborhood(agent) {
            let k = grid.index(p);
            for u in 0..self.alphabet.len() {
                self.probs[u * c + k] = 0.0;
            }
        }
        let scale = 1.0 / self.probs.iter().sum::<f64>();
        self.probs.iter_mut().for_each(|x| *x *= scale);
        Ok(p_f)
    }

    /// Bayes' rule with the position-only likelihood of `obs` at `agent`.
    /// Returns the evidence `p(obs)`.
    pub fn bayes_update(
        &mut self,
        obs: Observation,
        agent: LatticePoint,
        table: &LikelihoodTable,
        grid: &GridSpec,
    ) -> Result<f64> {
        if obs == Observation::Found {
            return Err(Error::InvalidParameter("cannot condition on a capture".into()));
        }
        self.check_grid(grid)?;
        let lmap = table.map(grid, obs, agent);
        let c = self.cells();
        let total = self.total();
        let joint: f64 = self
            .probs
            .chunks_exact(c)
            .map(|s| s.iter().zip(&lmap).map(|(b, l)| b * l).sum::<f64>())
            .sum();
        let evidence = joint / total;
        if !(evidence >= MIN_EVIDENCE) {
            return Err(Error::ImpossibleObservation(evidence));
        }
        for slice in self.probs.chunks_exact_mut(c) {
            for (b, &l) in slice.iter_mut().zip(&lmap) {
                *b *= l;
            }
        }
        let s: f64 = self.probs.iter().sum();
        self.probs.iter_mut().for_each(|b| *b /= s);
        Ok(evidence)
    }

    /// Zero the capture zone, then apply the observation. Returns the removed
    /// capture mass and the evidence of the observation.
    ///
    /// Same result as [`Belief::zero_capture_and_renormalize`] followed by
    /// [`Belief::bayes_update`], with a single normalization at the end. On
    /// error the belief is left untouched.
    pub fn observe(
        &mut self,
        obs: Observation,
        agent: LatticePoint,
        table: &LikelihoodTable,
        grid: &GridSpec,
    ) -> Result<(f64, f64)> {
        if obs == Observation::Found {
            return Err(Error::InvalidParameter("cannot condition on a capture".into()));
        }
        self.check_grid(grid)?;
        let c = self.cells();
        let n = self.alphabet.len();
        let total = self.total();
        let removed = self.capture_mass(agent, grid);
        let p_f = removed / total;
        if p_f >= COLLAPSE_THRESHOLD || !(total - removed > 0.0) {
            return Err(Error::BeliefCollapse(p_f));
        }
        // The table is zero at zero displacement only, so clear the rest of
        // the capture zone through the likelihood map.
        let mut lmap = table.map(grid, obs, agent);
        for p in grid.capture_neighborhood(agent) {
            lmap[grid.index(p)] = 0.0;
        }
        let mut joint = 0.0;
        for slice in self.probs.chunks_exact(c) {
            joint += slice.iter().zip(&lmap).map(|(b, l)| b * l).sum::<f64>();
        }
        let evidence = joint / (total - removed);
        if !(evidence >= MIN_EVIDENCE) {
            return Err(Error::ImpossibleObservation(evidence));
        }
        for u in 0..n {
            for (b, &l) in self.probs[u * c..(u + 1) * c].iter_mut().zip(&lmap) {
                *b = *b * l / joint;
            }
        }
        Ok((p_f, evidence))
    }

    /// [`Belief::observe`], also recording the entropy before and after.
    pub fn observe_traced(
        &mut self,
        obs: Observation,
        agent: LatticePoint,
        table: &LikelihoodTable,
        grid: &GridSpec,
    ) -> Result<BeliefUpdateTrace> {
        let entropy_before = self.entropy();
        let (capture_mass, evidence) = self.observe(obs, agent, table, grid)?;
        Ok(BeliefUpdateTrace {
            entropy_before,
            entropy_after: self.entropy(),
            observation: obs,
            capture_mass,
            evidence,
        })
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| xlog2x(p)).sum::<f64>()
    }

    /// Dump as CSV rows `velocity,i,j,probability` (nonzero entries only).
    pub fn to_csv(&self, grid: &GridSpec) -> String {
        let mut out = String::from("vi,vj,i,j,probability\n");
        let c = self.cells();
        for u in 0..self.alphabet.len() {
            let (vi, vj) = self.alphabet.velocity(u);
            for k in 0..c {
                let p = self.probs[u * c + k];
                if p > 0.0 {
                    let x = grid.point(k);
                    let _ = writeln!(out, "{vi},{vj},{},{},{p:e}", x.i, x.j);
                }
            }
        }
        out
    }
}

/// `dst[(i + di) mod L][(j + dj) mod L] = src[i][j]`.
fn roll(src: &[f64], dst: &mut [f64], side: usize, di: i64, dj: i64) {
    let l = side as i64;
    let sj = dj.rem_euclid(l) as usize;
    for i in 0..side {
        let ti = (i as i64 + di).rem_euclid(l) as usize;
        let row = &src[i * side..(i + 1) * side];
        let out = &mut dst[ti * side..(ti + 1) * side];
        out[sj..].copy_from_slice(&row[..side - sj]);
        out[..sj].copy_from_slice(&row[side - sj..]);
    }
}

/// One-step expected-entropy lookahead on a predicted belief.
///
/// For a hypothetical agent position `y` with capture zone `C`, observation
/// branch `h` has probability `A_h = sum_{x not in C} m(x) L_h(y - x)`, with
/// `m(x) = sum_u b(x,u)`, and the found branch has zero entropy. Because the
/// two likelihoods sum to one outside `C`, the `b log b` part of the branch
/// entropies collapses to the entropy of `b` itself plus the capture-zone
/// terms:
///
/// ```text
/// H[b|a] = H[b] + sum_{x in C, u} b log2 b
///               + sum_h [ A_h log2 A_h - sum_{x not in C} m(x) L_h log2 L_h ]
/// ```
///
/// The action-dependent part costs one pass over the lattice per action and
/// no logarithms outside the capture zone.
#[derive(Debug, Clone)]
pub struct EntropyLookahead<'b> {
    belief: &'b Belief,
    total: f64,
    mass: Vec<f64>,
}

impl<'b> EntropyLookahead<'b> {
    pub fn new(predicted: &'b Belief) -> Self {
        let mut mass = predicted.position_marginal();
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        Self {
            belief: predicted,
            total,
            mass,
        }
    }

    /// `H[b|a] - H[b]` for the agent moving to `y`.
    pub fn entropy_change_at(&self, y: LatticePoint, table: &LikelihoodTable, grid: &GridSpec) -> f64 {
        let c = self.belief.cells();
        let n = self.belief.alphabet.len();
        let mut a = [0.0_f64; 2];
        let mut acc = [0.0_f64; 2];
        let no = table.values(Observation::NoDetection);
        let yes = table.values(Observation::Detection);
        let no_l = table.xlog2x_values(Observation::NoDetection);
        let yes_l = table.xlog2x_values(Observation::Detection);
        let mut add = |k: usize, d: usize, sign: f64| {
            let m = sign * self.mass[k];
            a[0] += m * no[d];
            a[1] += m * yes[d];
            acc[0] += m * no_l[d];
            acc[1] += m * yes_l[d];
        };
        grid.for_each_offset(y, |k, d| add(k, d, 1.0));
        let mut inside = 0.0;
        for (oi, oj) in capture_offsets() {
            let p = grid.shift(y, oi, oj);
            let k = grid.index(p);
            let d = grid.displacement_index(grid.min_image(y, p));
            add(k, d, -1.0);
            for u in 0..n {
                inside += xlog2x(self.belief.probs[u * c + k] / self.total);
            }
        }
        let mut change = inside;
        for h in 0..2 {
            let ah = a[h].max(0.0);
            change += xlog2x(ah) - acc[h];
        }
        change
    }

    /// Entropy of the predicted belief itself.
    pub fn prior_entropy(&self) -> f64 {
        -self.belief.probs.iter().map(|&p| xlog2x(p / self.total)).sum::<f64>()
    }

    /// `H[b|a]` for the agent moving to `y`.
    pub fn expected_entropy_at(&self, y: LatticePoint, table: &LikelihoodTable, grid: &GridSpec) -> f64 {
        (self.prior_entropy() + self.entropy_change_at(y, table, grid)).max(0.0)
    }

    /// `H[b|a] - H[b]` for each of the four moves from `agent`.
    pub fn entropy_changes(&self, agent: LatticePoint, table: &LikelihoodTable, grid: &GridSpec) -> [f64; 4] {
        Action::ALL.map(|a| {
            let (di, dj) = a.offset();
            self.entropy_change_at(grid.shift(agent, di, dj), table, grid)
        })
    }

    /// `H[b|a]` for each of the four moves from `agent`.
    pub fn expected_entropies(&self, agent: LatticePoint, table: &LikelihoodTable, grid: &GridSpec) -> [f64; 4] {
        let h0 = self.prior_entropy();
        self.entropy_changes(agent, table, grid).map(|d| (h0 + d).max(0.0))
    }
}

/// `H[b|a]`: expected belief entropy after taking `action` from `agent`,
/// starting from the predicted belief.
pub fn expected_entropy_after(
    predicted: &Belief,
    action: Action,
    agent: LatticePoint,
    table: &LikelihoodTable,
    grid: &GridSpec,
) -> f64 {
    let (di, dj) = action.offset();
    EntropyLookahead::new(predicted).expected_entropy_at(grid.shift(agent, di, dj), table, grid)
}

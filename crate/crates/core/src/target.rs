//! Target motion models.
//!
//! Two models are provided: a lattice run-and-tumble whose velocity follows a
//! five-state Markov chain, and an off-lattice run-and-tumble with exponential
//! run durations and uniform reorientations. The latter is mapped back onto the
//! lattice by estimating a nine-state transition matrix from a long trajectory.
//!
//! Transition matrices use the conditioning convention `P(to | from)`: every
//! column `from` sums to one.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LatticePoint, Symmetry};

/// Ordered set of lattice velocities. The rest state is always last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alphabet {
    /// `{+e1, -e1, +e2, -e2, 0}`.
    Cardinal,
    /// The nine displacements `{-1, 0, 1}^2`: cardinals, diagonals, rest.
    Moore,
}

const CARDINAL: [(i64, i64); 5] = [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)];
const MOORE: [(i64, i64); 9] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
    (0, 0),
];

impl Alphabet {
    pub fn velocities(self) -> &'static [(i64, i64)] {
        match self {
            Alphabet::Cardinal => &CARDINAL,
            Alphabet::Moore => &MOORE,
        }
    }

    #[inline]
    pub fn len(self) -> usize {
        self.velocities().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    #[inline]
    pub fn velocity(self, index: usize) -> (i64, i64) {
        self.velocities()[index]
    }

    pub fn index_of(self, v: (i64, i64)) -> Option<usize> {
        self.velocities().iter().position(|&w| w == v)
    }

    pub fn rest(self) -> usize {
        self.len() - 1
    }

    pub fn from_len(n: usize) -> Option<Self> {
        match n {
            5 => Some(Alphabet::Cardinal),
            9 => Some(Alphabet::Moore),
            _ => None,
        }
    }

    /// Index permutation induced by a lattice symmetry.
    pub fn permutation(self, s: &Symmetry) -> Vec<usize> {
        self.velocities()
            .iter()
            .map(|&v| self.index_of(s.apply(v)).expect("alphabet closed under D4"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    alphabet: Alphabet,
    /// `probs[to * n + from] = P(to | from)`.
    probs: Vec<f64>,
}

impl TransitionMatrix {
    /// Build from a dense `P(to | from)` table, checking stochasticity.
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        let n = alphabet.len();
        if probs.len() != n * n {
            return Err(Error::AlphabetMismatch {
                expected: n * n,
                found: probs.len(),
            });
        }
        let m = Self { alphabet, probs };
        m.check_stochastic(1e-12)?;
        Ok(m)
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        let mut probs = vec![0.0; n * n];
        for k in 0..n {
            probs[k * n + k] = 1.0;
        }
        Self { alphabet, probs }
    }

    /// Every state jumps to rest and stays there.
    pub fn stationary(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        let rest = alphabet.rest();
        let mut probs = vec![0.0; n * n];
        for from in 0..n {
            probs[rest * n + from] = 1.0;
        }
        Self { alphabet, probs }
    }

    fn check_stochastic(&self, tol: f64) -> Result<()> {
        let n = self.len();
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "transition probabilities must be finite and nonnegative".into(),
            ));
        }
        for from in 0..n {
            let s: f64 = (0..n).map(|to| self.prob(to, from)).sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "column {from} of the transition matrix sums to {s}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.probs[to * self.len() + from]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest deviation of a column sum from one.
    pub fn stochasticity_error(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|from| ((0..n).map(|to| self.prob(to, from)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from `P(g to | g from) = P(to | from)` over the square's symmetries.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for s in &Symmetry::ALL {
            let perm = self.alphabet.permutation(s);
            for to in 0..n {
                for from in 0..n {
                    worst = worst.max((self.prob(perm[to], perm[from]) - self.prob(to, from)).abs());
                }
            }
        }
        worst
    }

    /// Draw the successor of `from`.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let n = self.len();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for to in 0..n {
            acc += self.prob(to, from);
            if u < acc {
                return to;
            }
        }
        // Rounding left a sliver above the last cumulative value.
        (0..n).rev().find(|&to| self.prob(to, from) > 0.0).unwrap_or(from)
    }

    /// Content hash used to key cached value tables.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([self.len() as u8]);
        for p in &self.probs {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Plain-text form: comment lines, an alphabet header, then one row per
    /// successor state `to` listing `P(to | from)` over `from`.
    pub fn to_text(&self, metadata: &[(String, String)]) -> String {
        let n = self.len();
        let mut out = String::from("# transition-matrix v1\n");
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("alphabet");
        for &(x, y) in self.alphabet.velocities() {
            let _ = write!(out, " {x},{y}");
        }
        out.push('\n');
        for to in 0..n {
            let row: Vec<String> = (0..n).map(|from| format!("{:.17e}", self.prob(to, from))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parse [`TransitionMatrix::to_text`] output; returns the matrix and its metadata.
    pub fn from_text(text: &str) -> Result<(Self, Vec<(String, String)>)> {
        let mut metadata = Vec::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            header = Some(line);
            break;
        }
        let header = header.ok_or_else(|| Error::Format("missing alphabet header".into()))?;
        let labels: Vec<&str> = header
            .strip_prefix("alphabet")
            .ok_or_else(|| Error::Format("first data line must be the alphabet header".into()))?
            .split_whitespace()
            .collect();
        let alphabet = Alphabet::from_len(labels.len())
            .ok_or_else(|| Error::Format(format!("unsupported alphabet size {}", labels.len())))?;
        for (k, label) in labels.iter().enumerate() {
            let (x, y) = label
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad velocity label {label:?}")))?;
            let v = (
                x.parse::<i64>().map_err(|e| Error::Format(e.to_string()))?,
                y.parse::<i64>().map_err(|e| Error::Format(e.to_string()))?,
            );
            if alphabet.velocity(k) != v {
                return Err(Error::Format(format!("alphabet order mismatch at {label}")));
            }
        }
        let n = alphabet.len();
        let mut probs = Vec::with_capacity(n * n);
        for line in lines {
            if line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Format(format!("row has {} entries, expected {n}", row.len())));
            }
            probs.extend(row);
        }
        Ok((Self::new(alphabet, probs)?, metadata))
    }

    pub fn write(&self, path: &Path, metadata: &[(String, String)]) -> Result<()> {
        std::fs::write(path, self.to_text(metadata))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<(Self, Vec<(String, String)>)> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Discrete run-and-tumble: a moving target keeps its direction with
/// probability `epsilon`, otherwise stops; a resting target picks each of the
/// four directions with probability `epsilon / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRtParams {
    epsilon: f64,
}

impl DiscreteRtParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "persistence probability must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    /// From the mean run duration `tau_p = 1 / (1 - epsilon)`.
    pub fn from_persistence_time(tau_p: f64) -> Result<Self> {
        if !(tau_p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "persistence time must exceed one step, got {tau_p}"
            )));
        }
        Self::new(1.0 - 1.0 / tau_p)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn persistence_time(&self) -> f64 {
        1.0 / (1.0 - self.epsilon)
    }

    pub fn rest_time(&self) -> f64 {
        1.0 / self.epsilon
    }
}

pub fn discrete_transition_matrix(params: DiscreteRtParams) -> TransitionMatrix {
    let eps = params.epsilon;
    let a = Alphabet::Cardinal;
    let n = a.len();
    let rest = a.rest();
    let mut probs = vec![0.0; n * n];
    for from in 0..n {
        if from == rest {
            for to in 0..rest {
                probs[to * n + from] = eps / 4.0;
            }
        } else {
            probs[from * n + from] = eps;
        }
        probs[rest * n + from] = 1.0 - eps;
    }
    TransitionMatrix { alphabet: a, probs }
}

fn is_irreducible(p: &TransitionMatrix) -> bool {
    let n = p.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..n {
                let w = if forward { p.prob(t, s) } else { p.prob(s, t) };
                if w > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    reach(true) && reach(false)
}

/// Stationary distribution `q` with `sum_from P(to|from) q(from) = q(to)`.
///
/// Runs power iteration on the lazy chain `(P + I) / 2`, which shares its
/// stationary vector with `P` and is aperiodic.
pub fn invariant_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 1_000_000;
    const TOL: f64 = 1e-13;
    if !is_irreducible(p) {
        return Err(Error::Reducible);
    }
    let n = p.len();
    let mut q = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let mut residual = 0.0_f64;
        for to in 0..n {
            let pq: f64 = (0..n).map(|from| p.prob(to, from) * q[from]).sum();
            residual = residual.max((pq - q[to]).abs());
            next[to] = 0.5 * (pq + q[to]);
        }
        let s: f64 = next.iter().sum();
        for (qi, &ni) in q.iter_mut().zip(&next) {
            *qi = ni / s;
        }
        if residual <= TOL {
            return Ok(q);
        }
    }
    Err(Error::NoStationaryConvergence(MAX_ITER))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteTarget {
    pub position: LatticePoint,
    /// Index into the alphabet; the velocity used for the next move.
    pub velocity: usize,
}

/// `X(t+1) = X(t) + U(t)`, then `U(t+1) ~ P(. | U(t))`.
pub fn step_discrete<R: Rng + ?Sized>(
    s: DiscreteTarget,
    p: &TransitionMatrix,
    grid: &GridSpec,
    rng: &mut R,
) -> DiscreteTarget {
    let (vi, vj) = p.alphabet().velocity(s.velocity);
    DiscreteTarget {
        position: grid.shift(s.position, vi, vj),
        velocity: p.sample_next(s.velocity, rng),
    }
}

/// Off-lattice run-and-tumble parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRtParams {
    pub speed: f64,
    /// Mean run duration; `f64::INFINITY` gives purely ballistic motion.
    pub mean_run_time: f64,
    /// Odor emission sub-step.
    pub substep: f64,
}

impl ContinuousRtParams {
    pub fn new(speed: f64, mean_run_time: f64, substep: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::InvalidParameter(format!("speed must be positive, got {speed}")));
        }
        if !(mean_run_time > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean run time must be positive, got {mean_run_time}"
            )));
        }
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(Error::InvalidParameter(format!("substep must be positive, got {substep}")));
        }
        Ok(Self {
            speed,
            mean_run_time,
            substep,
        })
    }

    /// Checks the emission sub-step against a sensing interval.
    pub fn validate_substep(&self, sensing_interval: f64) -> Result<()> {
        if self.substep > sensing_interval / 10.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "emission substep {} exceeds a tenth of the sensing interval {sensing_interval}",
                self.substep
            )));
        }
        Ok(())
    }

    fn draw_run<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mean_run_time.is_infinite() {
            f64::INFINITY
        } else {
            Exp::new(1.0 / self.mean_run_time)
                .expect("positive rate")
                .sample(rng)
        }
    }
}

/// Off-lattice target on the periodic square `[0, side)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTarget {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub time: f64,
    pub next_tumble: f64,
}

impl ContinuousTarget {
    /// Fresh target with a uniform heading; the run clock is memoryless.
    pub fn new<R: Rng + ?Sized>(x: f64, y: f64, params: &ContinuousRtParams, rng: &mut R) -> Self {
        Self {
            x,
            y,
            heading: rng.random::<f64>() * TAU,
            time: 0.0,
            next_tumble: params.draw_run(rng),
        }
    }

    /// Lattice cell containing the target; cell `k` covers `[k, k+1) * spacing`.
    pub fn cell(&self, grid: &GridSpec) -> LatticePoint {
        let h = grid.spacing();
        grid.wrap((self.x / h).floor() as i64, (self.y / h).floor() as i64)
    }
}

/// Straight piece of a source trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Piecewise-linear source path over one sensing interval, in unwrapped coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourcePath {
    pub segments: Vec<Segment>,
}

impl SourcePath {
    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t1)
    }

    /// Unwrapped position at time `t`, clamped to the covered interval.
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.t1)
            .or(self.segments.last())
            .expect("non-empty path");
        let dt = (t - seg.t0).clamp(0.0, seg.t1 - seg.t0);
        (seg.x0 + seg.vx * dt, seg.y0 + seg.vy * dt)
    }

    /// Total distance travelled.
    pub fn length(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| (s.t1 - s.t0) * s.vx.hypot(s.vy))
            .sum()
    }

    pub fn tumbles(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }
}

/// Advance the target exactly over `[t, t + horizon)`, tumbling at its
/// exponential clock times. Returns the new state and the travelled path.
/// An infinite `domain` leaves positions unwrapped.
pub fn step_continuous<R: Rng + ?Sized>(
    s: ContinuousTarget,
    params: &ContinuousRtParams,
    horizon: f64,
    domain: f64,
    rng: &mut R,
) -> (ContinuousTarget, SourcePath) {
    let mut state = s;
    let end = s.time + horizon;
    let mut path = SourcePath::default();
    let (mut x, mut y) = (s.x, s.y);
    let mut t = s.time;
    loop {
        let stop = state.next_tumble.min(end);
        let (vx, vy) = (params.speed * state.heading.cos(), params.speed * state.heading.sin());
        path.segments.push(Segment {
            t0: t,
            t1: stop,
            x0: x,
            y0: y,
            vx,
            vy,
        });
        x += vx * (stop - t);
        y += vy * (stop - t);
        t = stop;
        if state.next_tumble < end {
            state.heading = rng.random::<f64>() * TAU;
            state.next_tumble = t + params.draw_run(rng);
        } else {
            break;
        }
    }
    if domain.is_finite() {
        x = x.rem_euclid(domain);
        y = y.rem_euclid(domain);
    }
    state.x = x;
    state.y = y;
    state.time = end;
    (state, path)
}

/// Raw lattice-velocity transition counts from a discretized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub alphabet: Alphabet,
    /// `counts[to * n + from]`.
    pub counts: Vec<u64>,
    /// Same counts split into contiguous trajectory blocks, for resampling.
    pub blocks: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn count(&self, to: usize, from: usize) -> u64 {
        self.counts[to * self.alphabet.len() + from]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Integrate the continuous motion for `steps` unit intervals from `start`,
/// floor positions onto the lattice and count consecutive-velocity pairs.
pub fn count_discretized_transitions<R: Rng + ?Sized>(
    params: &ContinuousRtParams,
    grid: &GridSpec,
    start: ContinuousTarget,
    steps: usize,
    rng: &mut R,
) -> Result<TransitionCounts> {
    const BLOCKS: usize = 64;
    let alphabet = Alphabet::Moore;
    let n = alphabet.len();
    let h = grid.spacing();
    let mut counts = vec![0u64; n * n];
    let mut blocks = vec![vec![0u64; n * n]; BLOCKS];
    let block_len = steps.div_ceil(BLOCKS).max(1);
    // Unbounded domain: floor differences are what matter.
    let mut state = start;
    let cell = |s: &ContinuousTarget| ((s.x / h).floor() as i64, (s.y / h).floor() as i64);
    let mut prev_cell = cell(&state);
    let mut prev_velocity: Option<usize> = None;
    for step in 0..steps + 1 {
        let (next, _) = step_continuous(state, params, 1.0, f64::INFINITY, rng);
        state = next;
        let c = cell(&state);
        let v = (c.0 - prev_cell.0, c.1 - prev_cell.1);
        let idx = alphabet.index_of(v).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "lattice velocity {v:?} outside the nine-state alphabet; speed exceeds one cell per step"
            ))
        })?;
        if let Some(from) = prev_velocity {
            counts[idx * n + from] += 1;
            blocks[(step - 1) / block_len][idx * n + from] += 1;
        }
        prev_velocity = Some(idx);
        prev_cell = c;
    }
    Ok(TransitionCounts {
        alphabet,
        counts,
        blocks,
    })
}

/// Average counts over the square's symmetries acting jointly on both
/// indices, then normalize columns. Integer arithmetic keeps the result
/// exactly invariant.
pub fn symmetrized_matrix(counts: &[u64], alphabet: Alphabet) -> Result<TransitionMatrix> {
    let n = alphabet.len();
    let perms: Vec<Vec<usize>> = Symmetry::ALL.iter().map(|s| alphabet.permutation(s)).collect();
    let mut sym = vec![0u64; n * n];
    for to in 0..n {
        for from in 0..n {
            sym[to * n + from] = perms.iter().map(|p| counts[p[to] * n + p[from]]).sum();
        }
    }
    let mut probs = vec![0.0; n * n];
    for from in 0..n {
        let total: u64 = (0..n).map(|to| sym[to * n + from]).sum();
        if total == 0 {
            let (x, y) = alphabet.velocity(from);
            return Err(Error::UnvisitedState(format!("({x},{y})")));
        }
        for to in 0..n {
            probs[to * n + from] = sym[to * n + from] as f64 / total as f64;
        }
    }
    TransitionMatrix::new(alphabet, probs)
}

/// Empirical nine-state model of the continuous motion seen through the lattice.
#[derive(Debug, Clone)]
pub struct DiscretizedEstimate {
    pub matrix: TransitionMatrix,
    pub counts: TransitionCounts,
}

impl DiscretizedEstimate {
    /// Block-bootstrap standard deviation of every matrix entry.
    pub fn bootstrap_sigma<R: Rng + ?Sized>(&self, resamples: usize, rng: &mut R) -> Result<Vec<f64>> {
        let n = self.matrix.len();
        let nb = self.counts.blocks.len();
        let mut sum = vec![0.0; n * n];
        let mut sum_sq = vec![0.0; n * n];
        for _ in 0..resamples {
            let mut c = vec![0u64; n * n];
            for _ in 0..nb {
                let b = &self.counts.blocks[rng.random_range(0..nb)];
                for (ci, bi) in c.iter_mut().zip(b) {
                    *ci += bi;
                }
            }
            let m = symmetrized_matrix(&c, self.counts.alphabet)?;
            for (k, &p) in m.as_slice().iter().enumerate() {
                sum[k] += p;
                sum_sq[k] += p * p;
            }
        }
        let r = resamples as f64;
        Ok(sum
            .iter()
            .zip(&sum_sq)
            .map(|(&s, &s2)| ((s2 / r - (s / r).powi(2)).max(0.0) * r / (r - 1.0)).sqrt())
            .collect())
    }

    /// Mean run length implied by the self-persistence of cardinal moves.
    pub fn implied_persistence_time(&self) -> f64 {
        1.0 / (1.0 - self.matrix.prob(0, 0))
    }
}

/// Estimate the nine-state lattice transition matrix of the continuous motion.
pub fn estimate_discretized_transition<R: Rng + ?Sized>(
    params: &ContinuousRtParams,
    grid: &GridSpec,
    trajectory_steps: usize,
    rng: &mut R,
) -> Result<DiscretizedEstimate> {
    if trajectory_steps < 1_000_000 {
        return Err(Error::InvalidParameter(format!(
            "trajectory of {trajectory_steps} steps is too short; need at least 10^6"
        )));
    }
    let h = grid.spacing();
    let start = ContinuousTarget::new(rng.random::<f64>() * h, rng.random::<f64>() * h, params, rng);
    let counts = count_discretized_transitions(params, grid, start, trajectory_steps, rng)?;
    let matrix = symmetrized_matrix(&counts.counts, counts.alphabet)?;
    Ok(DiscretizedEstimate { matrix, counts })
}

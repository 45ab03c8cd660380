//! Pursuit episodes and seeded batches.
//!
//! One step of an episode, in order: the belief is pushed through the target
//! model, the policy picks a move, agent and target both move, capture is
//! checked on the true positions, and if the search goes on the agent clears
//! its capture zone in the belief and folds in the odor observation made at its
//! new position.
//!
//! Each episode draws its randomness from four independent ChaCha streams
//! (initial state, target motion, sensing, policy) keyed by a per-episode seed,
//! so runs of different policies on the same seed share the same start and, as
//! long as their moves agree, the same target and sensor history.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::grid::{Action, GridSpec, LatticePoint, CAPTURE_RADIUS};
use crate::odor::cloud::{distance_to_cell, sample_observation_continuous, ParticleCloud};
use crate::odor::{sample_observation_discrete, DetectionModel, LikelihoodKind, LikelihoodTable, Observation};
use crate::policy::{select_action_hybrid, select_action_infotaxis, select_action_random, PolicySpec, QTable};
use crate::target::{
    discrete_transition_matrix, invariant_distribution, step_continuous, step_discrete, ContinuousRtParams,
    ContinuousTarget, DiscreteRtParams, DiscreteTarget, TransitionMatrix,
};

/// History the odor cloud accumulates before the first sensing event, in
/// units of the decay time.
pub const DEFAULT_PREWARM_DECAY_TIMES: f64 = 5.0;

/// How the true target and odor behave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    /// Lattice run-and-tumble, Bernoulli detections from the hit rate.
    Discrete { params: DiscreteRtParams },
    /// Off-lattice run-and-tumble emitting Lagrangian odor tracers.
    Continuous {
        params: ContinuousRtParams,
        detection_radius: f64,
        prewarm_decay_times: f64,
    },
}

/// Everything that defines one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub grid: GridSpec,
    pub model: DetectionModel,
    pub environment: Environment,
    pub policy: PolicySpec,
    pub max_steps: usize,
    pub seed: u64,
}

/// Default cap on the number of steps: `20 L^2`.
pub fn default_max_steps(grid: &GridSpec) -> usize {
    20 * grid.cells()
}

/// Prepared, immutable data shared by all episodes of a batch.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: GridSpec,
    pub model: DetectionModel,
    pub environment: Environment,
    pub policy: PolicySpec,
    pub max_steps: usize,
    /// Velocity chain the agent believes in.
    pub agent_matrix: TransitionMatrix,
    /// Its invariant distribution.
    pub invariant: Vec<f64>,
    /// True velocity chain on the lattice (discrete environment only).
    pub true_matrix: Option<TransitionMatrix>,
    /// Detection likelihood the agent uses.
    pub likelihood: Arc<LikelihoodTable>,
    /// Likelihood generating the detections (discrete environment only).
    pub generator: Option<Arc<LikelihoodTable>>,
    pub q_table: Option<Arc<QTable>>,
}

impl Scenario {
    /// Lattice environment where the agent's model is exact.
    pub fn discrete(
        grid: GridSpec,
        model: DetectionModel,
        params: DiscreteRtParams,
        policy: PolicySpec,
        max_steps: usize,
        q_table: Option<Arc<QTable>>,
    ) -> Result<Self> {
        let p = discrete_transition_matrix(params);
        let table = Arc::new(LikelihoodTable::new(&model, &grid, LikelihoodKind::HitRate)?);
        Self::build(
            grid,
            model,
            Environment::Discrete { params },
            policy,
            max_steps,
            p.clone(),
            Some(p),
            table.clone(),
            Some(table),
            q_table,
        )
    }

    /// Continuous environment; `agent_matrix` is the lattice chain estimated
    /// from the continuous motion.
    #[allow(clippy::too_many_arguments)]
    pub fn continuous(
        grid: GridSpec,
        model: DetectionModel,
        params: ContinuousRtParams,
        agent_matrix: TransitionMatrix,
        policy: PolicySpec,
        max_steps: usize,
        q_table: Option<Arc<QTable>>,
    ) -> Result<Self> {
        params.validate_substep(model.interval())?;
        let table = Arc::new(LikelihoodTable::new(&model, &grid, LikelihoodKind::CellOccupancy)?);
        Self::build(
            grid,
            model,
            Environment::Continuous {
                params,
                detection_radius: grid.spacing(),
                prewarm_decay_times: DEFAULT_PREWARM_DECAY_TIMES,
            },
            policy,
            max_steps,
            agent_matrix,
            None,
            table,
            None,
            q_table,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        grid: GridSpec,
        model: DetectionModel,
        environment: Environment,
        policy: PolicySpec,
        max_steps: usize,
        agent_matrix: TransitionMatrix,
        true_matrix: Option<TransitionMatrix>,
        likelihood: Arc<LikelihoodTable>,
        generator: Option<Arc<LikelihoodTable>>,
        q_table: Option<Arc<QTable>>,
    ) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
        }
        let invariant = invariant_distribution(&agent_matrix)?;
        let s = Self {
            grid,
            model,
            environment,
            policy,
            max_steps,
            agent_matrix,
            invariant,
            true_matrix,
            likelihood,
            generator,
            q_table,
        };
        s.check_policy()?;
        Ok(s)
    }

    fn check_policy(&self) -> Result<()> {
        self.policy.validate()?;
        if self.policy.needs_q_table() {
            let t = self
                .q_table
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("{} requires a value table", self.policy.label())))?;
            if t.side() != self.grid.side()
                || t.alphabet() != self.agent_matrix.alphabet()
                || t.matrix_digest() != self.agent_matrix.digest()
            {
                return Err(Error::InvalidParameter(
                    "value table was built for a different lattice or target model".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same scenario under another policy.
    pub fn with_policy(&self, policy: PolicySpec) -> Result<Self> {
        let mut s = self.clone();
        s.policy = policy;
        s.check_policy()?;
        Ok(s)
    }

    pub fn with_max_steps(&self, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
        }
        let mut s = self.clone();
        s.max_steps = max_steps;
        Ok(s)
    }

    /// Episode configuration for a given seed.
    pub fn config(&self, seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            grid: self.grid,
            model: self.model,
            environment: self.environment,
            policy: self.policy,
            max_steps: self.max_steps,
            seed,
        }
    }

    fn capture_radius(&self) -> f64 {
        CAPTURE_RADIUS * self.grid.spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Captured,
    Truncated,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Captured => "captured",
            Outcome::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    /// Agent moves until capture (or `max_steps`).
    pub search_time: usize,
    pub detections: usize,
    /// Times the belief had to be reset after a collapse or an observation it
    /// deemed impossible.
    pub belief_resets: usize,
    /// Distance between agent and target at the end, in lattice units.
    pub final_distance: f64,
    /// FNV-1a hash of the action sequence.
    pub action_digest: u64,
}

/// Per-episode seed from a batch seed: a SplitMix64 mix of both.
pub fn episode_seed(master_seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(master_seed.wrapping_add(mix(index.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

struct Streams {
    target: ChaCha8Rng,
    sensing: ChaCha8Rng,
    policy: ChaCha8Rng,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

#[derive(Debug, Clone)]
pub enum TargetState {
    Discrete(DiscreteTarget),
    Continuous {
        state: ContinuousTarget,
        cloud: ParticleCloud,
    },
}

/// State of one running episode.
pub struct Episode<'a> {
    scenario: &'a Scenario,
    pub agent: LatticePoint,
    pub target: TargetState,
    pub belief: Belief,
    prev_action: Option<Action>,
    steps: usize,
    detections: usize,
    belief_resets: usize,
    digest: u64,
    outcome: Option<Outcome>,
    seed: u64,
    streams: Streams,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Draw an index with probability proportional to `weights`.
fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).expect("positive total")
}

/// Place agent and target and build the first belief.
///
/// The agent sits at the lattice center. The target cell is drawn from the
/// agent's initial belief, i.e. from the detection likelihood outside the
/// capture zone, and its velocity from the invariant law. In the continuous
/// environment the target is put at a uniform point of that cell with a uniform
/// heading, and the odor cloud is grown over the preceding history.
pub fn init_episode(scenario: &Scenario, seed: u64) -> Result<Episode<'_>> {
    let grid = &scenario.grid;
    let agent = grid.center();
    let alphabet = scenario.agent_matrix.alphabet();
    let belief = Belief::initial(agent, &scenario.likelihood, &scenario.invariant, grid, alphabet)?;
    let mut init = stream(seed, 0);
    let position = sample_weighted(&belief.position_marginal(), &mut init);
    let cell = grid.point(position);
    let mut streams = Streams {
        target: stream(seed, 1),
        sensing: stream(seed, 2),
        policy: stream(seed, 3),
    };
    let target = match scenario.environment {
        Environment::Discrete { .. } => TargetState::Discrete(DiscreteTarget {
            position: cell,
            velocity: sample_weighted(&scenario.invariant, &mut init),
        }),
        Environment::Continuous {
            params,
            prewarm_decay_times,
            ..
        } => {
            let h = grid.spacing();
            let x = (cell.i as f64 + init.random::<f64>()) * h;
            let y = (cell.j as f64 + init.random::<f64>()) * h;
            let state = ContinuousTarget::new(x, y, &params, &mut init);
            let domain = grid.side() as f64 * h;
            let cloud = ParticleCloud::prewarmed(
                &state,
                &params,
                &scenario.model,
                prewarm_decay_times * scenario.model.decay_time(),
                domain,
                &mut streams.target,
            );
            TargetState::Continuous { state, cloud }
        }
    };
    Ok(Episode {
        scenario,
        agent,
        target,
        belief,
        prev_action: None,
        steps: 0,
        detections: 0,
        belief_resets: 0,
        digest: FNV_OFFSET,
        outcome: None,
        seed,
        streams,
    })
}

impl<'a> Episode<'a> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Distance from the agent to the true target, in lattice units.
    pub fn distance(&self) -> f64 {
        let grid = &self.scenario.grid;
        match &self.target {
            TargetState::Discrete(t) => grid.min_image(self.agent, t.position).norm(),
            TargetState::Continuous { state, .. } => {
                distance_to_cell(self.agent, state.x, state.y, grid) / grid.spacing()
            }
        }
    }

    fn captured(&self) -> bool {
        let grid = &self.scenario.grid;
        match &self.target {
            TargetState::Discrete(t) => grid.min_image(self.agent, t.position).norm_sq() <= 2,
            TargetState::Continuous { state, .. } => {
                distance_to_cell(self.agent, state.x, state.y, grid) <= self.scenario.capture_radius()
            }
        }
    }

    fn choose(&mut self) -> Result<(Action, Option<Belief>)> {
        let s = self.scenario;
        match s.policy {
            PolicySpec::Random { alpha } => Ok((
                select_action_random(self.prev_action, alpha, &mut self.streams.policy),
                None,
            )),
            PolicySpec::Infotaxis => {
                let predicted = self.belief.predict(&s.agent_matrix, &s.grid)?;
                let a = select_action_infotaxis(&predicted, self.agent, &s.likelihood, &s.grid, &mut self.streams.policy);
                Ok((a, Some(predicted)))
            }
            PolicySpec::Greedy | PolicySpec::Hybrid { .. } => {
                let w = s.policy.weight().expect("belief policy");
                let predicted = self.belief.predict(&s.agent_matrix, &s.grid)?;
                let a = select_action_hybrid(
                    &self.belief,
                    &predicted,
                    self.agent,
                    w,
                    s.q_table.as_deref(),
                    &s.likelihood,
                    &s.grid,
                    &mut self.streams.policy,
                )?;
                Ok((a, Some(predicted)))
            }
        }
    }

    fn move_target(&mut self) {
        let s = self.scenario;
        match &mut self.target {
            TargetState::Discrete(t) => {
                let p = s.true_matrix.as_ref().expect("discrete environment carries its chain");
                *t = step_discrete(*t, p, &s.grid, &mut self.streams.target);
            }
            TargetState::Continuous { state, cloud } => {
                let Environment::Continuous { params, .. } = s.environment else {
                    unreachable!("continuous target in a discrete environment")
                };
                let domain = s.grid.side() as f64 * s.grid.spacing();
                let (next, path) = step_continuous(*state, &params, s.model.interval(), domain, &mut self.streams.target);
                cloud.evolve(&path, &s.model, params.substep, domain, &mut self.streams.target);
                *state = next;
            }
        }
    }

    fn sense(&mut self) -> Observation {
        let s = self.scenario;
        match &self.target {
            TargetState::Discrete(t) => sample_observation_discrete(
                self.agent,
                t.position,
                s.generator.as_ref().expect("discrete environment carries its generator"),
                &s.grid,
                &mut self.streams.sensing,
            ),
            TargetState::Continuous { cloud, .. } => {
                let Environment::Continuous { detection_radius, .. } = s.environment else {
                    unreachable!("continuous target in a discrete environment")
                };
                sample_observation_continuous(self.agent, cloud, detection_radius, &s.grid)
            }
        }
    }

    fn reset_belief(&mut self) -> Result<()> {
        let s = self.scenario;
        self.belief_resets += 1;
        self.belief = Belief::uniform_outside_capture(self.agent, &s.invariant, &s.grid, s.agent_matrix.alphabet())?;
        Ok(())
    }

    /// Advance one time step. Returns the outcome once the episode is over.
    pub fn step(&mut self) -> Result<Option<Outcome>> {
        if self.outcome.is_some() {
            return Ok(self.outcome);
        }
        let s = self.scenario;
        let (action, predicted) = self.choose()?;
        self.prev_action = Some(action);
        self.digest = (self.digest ^ (action.index() as u64 + 1)).wrapping_mul(FNV_PRIME);
        let (di, dj) = action.offset();
        self.agent = s.grid.shift(self.agent, di, dj);
        self.move_target();
        self.steps += 1;
        if self.captured() {
            self.outcome = Some(Outcome::Captured);
            return Ok(self.outcome);
        }
        let obs = self.sense();
        if obs == Observation::Detection {
            self.detections += 1;
        }
        if let Some(predicted) = predicted {
            self.belief = predicted;
            match self.belief.observe(obs, self.agent, &s.likelihood, &s.grid) {
                Ok(_) => {}
                Err(Error::BeliefCollapse(_)) | Err(Error::ImpossibleObservation(_)) => {
                    self.reset_belief()?;
                    if let Err(e) = self.belief.bayes_update(obs, self.agent, &s.likelihood, &s.grid) {
                        if !matches!(e, Error::ImpossibleObservation(_)) {
                            return Err(e);
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if self.steps >= s.max_steps {
            self.outcome = Some(Outcome::Truncated);
        }
        Ok(self.outcome)
    }

    pub fn run(mut self, index: usize) -> Result<EpisodeRecord> {
        while self.step()?.is_none() {}
        Ok(self.record(index))
    }

    pub fn record(&self, index: usize) -> EpisodeRecord {
        EpisodeRecord {
            index,
            seed: self.seed,
            outcome: self.outcome.unwrap_or(Outcome::Truncated),
            search_time: self.steps,
            detections: self.detections,
            belief_resets: self.belief_resets,
            final_distance: self.distance(),
            action_digest: self.digest,
        }
    }
}

/// Run one episode to completion.
pub fn run_episode(scenario: &Scenario, seed: u64, index: usize) -> Result<EpisodeRecord> {
    init_episode(scenario, seed)?.run(index)
}

/// Outcome of a batch: every record, in episode order, and its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub records: Vec<EpisodeRecord>,
    pub stats: BatchStats,
}

/// Run `n` episodes on `jobs` worker threads. Episode `i` uses
/// `episode_seed(master_seed, i)`, so the result does not depend on `jobs`.
pub fn run_batch(scenario: &Scenario, n: usize, master_seed: u64, jobs: usize) -> Result<Batch> {
    if n == 0 {
        return Err(Error::InvalidParameter("a batch needs at least one episode".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let records: Vec<EpisodeRecord> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| run_episode(scenario, episode_seed(master_seed, i as u64), i))
            .collect::<Result<_>>()
    })?;
    let stats = BatchStats::from_records(&records, scenario.max_steps);
    Ok(Batch { records, stats })
}

/// Summary of a batch of search times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub n: usize,
    /// Mean search time, truncated episodes counted at `max_steps`.
    pub mean: f64,
    pub stderr: f64,
    pub capture_fraction: f64,
    pub truncated: usize,
    pub max_steps: usize,
    /// `(T, P(search time > T))` at `T = 0` and every observed capture time.
    /// Truncated episodes never count as found.
    pub ccdf: Vec<(usize, f64)>,
}

impl BatchStats {
    pub fn from_records(records: &[EpisodeRecord], max_steps: usize) -> Self {
        let n = records.len();
        let times: Vec<f64> = records.iter().map(|r| r.search_time as f64).collect();
        let mean = times.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let truncated = records.iter().filter(|r| r.outcome == Outcome::Truncated).count();
        let mut captured: Vec<usize> = records
            .iter()
            .filter(|r| r.outcome == Outcome::Captured)
            .map(|r| r.search_time)
            .collect();
        captured.sort_unstable();
        let mut ccdf = vec![(0, 1.0)];
        let mut k = 0;
        while k < captured.len() {
            let t = captured[k];
            while k < captured.len() && captured[k] == t {
                k += 1;
            }
            ccdf.push((t, (n - k) as f64 / n as f64));
        }
        if truncated > 0 && ccdf.last().is_some_and(|&(t, _)| t < max_steps) {
            ccdf.push((max_steps, truncated as f64 / n as f64));
        }
        Self {
            n,
            mean,
            stderr: (var / n as f64).sqrt(),
            capture_fraction: (n - truncated) as f64 / n as f64,
            truncated,
            max_steps,
            ccdf,
        }
    }

    /// `P(search time > t)`.
    pub fn ccdf_at(&self, t: usize) -> f64 {
        match self.ccdf.iter().rposition(|&(s, _)| s <= t) {
            Some(k) => self.ccdf[k].1,
            None => 1.0,
        }
    }
}

/// Mean and standard error of `T_a - T_b` over episodes paired by index.
pub fn paired_difference(a: &[EpisodeRecord], b: &[EpisodeRecord]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter("paired comparison needs equal, nonempty batches".into()));
    }
    if a.iter().zip(b).any(|(x, y)| x.seed != y.seed) {
        return Err(Error::InvalidParameter("paired comparison needs matching seeds".into()));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.search_time as f64 - y.search_time as f64)
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = if d.len() > 1 {
        d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// Per-episode CSV, preceded by `#`-prefixed header lines.
pub fn records_to_csv(records: &[EpisodeRecord], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("episode_id,seed,outcome,T,n_detections,belief_resets,final_distance\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            r.index,
            r.seed,
            r.outcome.as_str(),
            r.search_time,
            r.detections,
            r.belief_resets,
            r.final_distance
        );
    }
    out
}

/// CCDF table `T,ccdf`, preceded by `#`-prefixed header lines.
pub fn ccdf_to_csv(stats: &BatchStats, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("T,ccdf\n");
    for (t, p) in &stats.ccdf {
        let _ = writeln!(out, "{t},{p:.9}");
    }
    out
}

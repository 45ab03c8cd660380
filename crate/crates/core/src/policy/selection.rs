//! Turning a belief into a move.
//!
//! The hybrid score of action `a` is `w * Q_greedy(a) - (1 - w) * H[b|a]`, with
//! `Q_greedy` the belief average of the MDP action values and `H[b|a]` the
//! expected posterior entropy in bits. `w = 0` is Infotaxis, `w = 1` the pure
//! greedy drive. The entropy of the predicted belief is common to all four
//! moves, so scores are built from the expected entropy change
//! `H[b|a] - H[b]`, which has the same argmax and is much cheaper. Every
//! selection draws exactly one number from the rng to break ties, so policies
//! that agree on a move also stay in lockstep on the stream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::QTable;
use crate::belief::{Belief, EntropyLookahead};
use crate::error::{Error, Result};
use crate::grid::{Action, GridSpec, LatticePoint};
use crate::odor::LikelihoodTable;

/// Relative tolerance under which two scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Infotaxis,
    Greedy,
    Hybrid { w: f64 },
    Random { alpha: f64 },
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::Hybrid { w } if !(0.0..=1.0).contains(&w) => {
                Err(Error::InvalidParameter(format!("blend weight must lie in [0, 1], got {w}")))
            }
            PolicySpec::Random { alpha } if !(alpha > 0.0 && alpha <= 1.0) => Err(Error::InvalidParameter(
                format!("tumble probability must lie in (0, 1], got {alpha}"),
            )),
            _ => Ok(()),
        }
    }

    /// Blend weight for the belief-driven policies.
    pub fn weight(&self) -> Option<f64> {
        match *self {
            PolicySpec::Infotaxis => Some(0.0),
            PolicySpec::Greedy => Some(1.0),
            PolicySpec::Hybrid { w } => Some(w),
            PolicySpec::Random { .. } => None,
        }
    }

    pub fn needs_q_table(&self) -> bool {
        self.weight().is_some_and(|w| w > 0.0)
    }

    pub fn uses_belief(&self) -> bool {
        !matches!(self, PolicySpec::Random { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            PolicySpec::Infotaxis => "infotaxis".into(),
            PolicySpec::Greedy => "greedy".into(),
            PolicySpec::Hybrid { w } => format!("hybrid(w={w})"),
            PolicySpec::Random { alpha } => format!("random(alpha={alpha})"),
        }
    }
}

/// `Q_greedy(a) = sum_{x,u} b(x,u) Q(X_ag - x, u; a)` for the four moves.
///
/// `belief` is the belief over the target state at the time the move is made,
/// before the target's own step: the MDP table already accounts for that step.
pub fn q_greedy(belief: &Belief, agent: LatticePoint, table: &QTable, grid: &GridSpec) -> Result<[f64; 4]> {
    if table.alphabet() != belief.alphabet() {
        return Err(Error::AlphabetMismatch {
            expected: table.alphabet().len(),
            found: belief.alphabet().len(),
        });
    }
    if table.side() != grid.side() || belief.side() != grid.side() {
        return Err(Error::InvalidParameter("value table and belief live on different lattices".into()));
    }
    let c = grid.cells();
    let values = table.as_slice();
    let mut dindex = vec![0usize; c];
    grid.for_each_offset(agent, |k, d| dindex[k] = d);
    let mut out = [0.0; 4];
    for u in 0..belief.alphabet().len() {
        let base = u * c;
        for (&b, &d) in belief.slice(u).iter().zip(&dindex) {
            if b == 0.0 {
                continue;
            }
            let r = (base + d) * 4;
            let row = &values[r..r + 4];
            for a in 0..4 {
                out[a] += b * row[a];
            }
        }
    }
    Ok(out)
}

/// Indices of the maximal scores, within [`TIE_TOLERANCE`].
fn best_set(scores: &[f64; 4]) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * best.abs().max(1.0);
    (0..4).filter(|&a| best - scores[a] <= slack).collect()
}

/// Indices of the minimal scores, within [`TIE_TOLERANCE`].
fn least_set(scores: &[f64; 4]) -> Vec<usize> {
    let least = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOLERANCE * least.abs().max(1.0);
    (0..4).filter(|&a| scores[a] - least <= slack).collect()
}

/// Uniform pick from `set` using exactly one draw.
fn pick<R: Rng + ?Sized>(set: &[usize], rng: &mut R) -> Action {
    let u: f64 = rng.random();
    let k = ((u * set.len() as f64) as usize).min(set.len() - 1);
    Action::from_index(set[k])
}

/// Infotaxis: minimize the expected entropy after the move.
pub fn select_action_infotaxis<R: Rng + ?Sized>(
    predicted: &Belief,
    agent: LatticePoint,
    likelihood: &LikelihoodTable,
    grid: &GridSpec,
    rng: &mut R,
) -> Action {
    let h = EntropyLookahead::new(predicted).entropy_changes(agent, likelihood, grid);
    pick(&least_set(&h), rng)
}

/// Blended scores `w Q_greedy(a) - (1 - w) (H[b|a] - H[b])` for the four moves.
pub fn hybrid_scores(
    current: &Belief,
    predicted: &Belief,
    agent: LatticePoint,
    w: f64,
    table: Option<&QTable>,
    likelihood: &LikelihoodTable,
    grid: &GridSpec,
) -> Result<[f64; 4]> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!("blend weight must lie in [0, 1], got {w}")));
    }
    let mut score = [0.0; 4];
    if w > 0.0 {
        let table = table.ok_or_else(|| Error::InvalidParameter("greedy drive requires a value table".into()))?;
        let q = q_greedy(current, agent, table, grid)?;
        for a in 0..4 {
            score[a] = w * q[a];
        }
    }
    if w < 1.0 {
        let h = EntropyLookahead::new(predicted).entropy_changes(agent, likelihood, grid);
        for a in 0..4 {
            score[a] -= (1.0 - w) * h[a];
        }
    }
    Ok(score)
}

/// Argmax of the blended score. `current` is the belief at the time of the
/// move, `predicted` the same belief pushed one step through the target model.
#[allow(clippy::too_many_arguments)]
pub fn select_action_hybrid<R: Rng + ?Sized>(
    current: &Belief,
    predicted: &Belief,
    agent: LatticePoint,
    w: f64,
    table: Option<&QTable>,
    likelihood: &LikelihoodTable,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<Action> {
    let score = hybrid_scores(current, predicted, agent, w, table, likelihood, grid)?;
    Ok(pick(&best_set(&score), rng))
}

/// Persistent random walk: keep `prev` with probability `1 - alpha`, otherwise
/// draw uniformly among all four moves (possibly `prev` again).
pub fn select_action_random<R: Rng + ?Sized>(prev: Option<Action>, alpha: f64, rng: &mut R) -> Action {
    match prev {
        Some(a) if rng.random::<f64>() >= alpha => a,
        _ => Action::from_index(rng.random_range(0..4)),
    }
}

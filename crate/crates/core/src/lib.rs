//! Olfactory pursuit of a moving odor source on a periodic lattice.
//!
//! An agent infers a joint belief over the position and velocity of a
//! run-and-tumble target from sparse binary odor detections, and chooses moves
//! by Infotaxis, a belief-averaged greedy MDP drive, a blend of the two, or a
//! persistent random walk that ignores odor altogether.
//!
//! Layout, bottom up:
//!
//! * [`grid`]: torus geometry, actions, the D4 symmetry group.
//! * [`target`]: discrete and continuous run-and-tumble motion, and the
//!   empirical lattice Markov chain for the continuous one.
//! * [`odor`]: detection likelihoods, the Bessel K0 kernel, Lagrangian tracers.
//! * [`belief`]: the Bayes filter and the expected-entropy lookahead.
//! * [`policy`]: value iteration, action selection.
//! * [`episode`]: single episodes, seeded parallel batches, statistics.

pub mod belief;
pub mod episode;
pub mod error;
pub mod grid;
pub mod odor;
pub mod policy;
pub mod target;

pub use belief::{Belief, BeliefUpdateTrace, EntropyLookahead};
pub use error::{Error, Result};
pub use grid::{Action, Displacement, GridSpec, LatticePoint};
pub use odor::{DetectionModel, LikelihoodKind, LikelihoodTable, Observation};
pub use policy::{PolicySpec, QTable};
pub use target::{Alphabet, TransitionMatrix};

//! Action selection.
//!
//! [`mdp`] solves the fully observable pursuit problem once per target model;
//! [`selection`] turns a belief into a move.

pub mod mdp;
pub mod selection;

pub use mdp::{
    load_cached, load_or_compute, value_iteration, value_iteration_with_report, CacheStatus, QTable,
    ValueIterationReport, DEFAULT_GAMMA, DEFAULT_TOLERANCE,
};
pub use selection::{
    q_greedy, select_action_hybrid, select_action_infotaxis, select_action_random, PolicySpec,
};

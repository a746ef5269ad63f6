//! Goal-conditioned tabular reinforcement learning testbed.
//!
//! The crate pairs two small worlds — a fully observable grid maze
//! ([`gridworld`]) and a partially observable crafting world
//! ([`craftworld`]) — with a family of background-learning agents
//! ([`agents`]): epsilon-greedy Q-learning over a universal (goal-conditioned)
//! table, universal successor features with GPI, Dyna, multitask preplay
//! (counterfactual-goal simulation), and decision-time BFS/DFS planners.
//! Prioritized trajectory replay lives in [`replay`], TD-lambda learning and
//! the value/SF tables in [`values`], behavioral path-reuse metrics and the
//! Wilcoxon signed-rank test in [`metrics`], and the config-driven experiment
//! runner plus CLI plumbing in [`harness`].
//!
//! Runnable walkthroughs for each capability live under `examples/`; the
//! `preplay` binary exposes the experiment runner (`run`, `sweep`, `plot`,
//! `validate`, `render-maze`).

pub mod agents;
pub mod craftworld;
pub mod domain;
pub mod gridworld;
pub mod harness;
pub mod metrics;
pub mod replay;
pub mod values;

pub use domain::{Domain, GoalId, StateKey};

//! Progressive explanation generation for planning-model differences.
//!
//! The pipeline: compare a robot and a human planning model ([`model`],
//! [`planner`]), pick a complete explanation ([`reconciliation`]), lay its
//! orderings out as a goal-based MDP ([`mdp`]), learn a per-step reward from
//! example orderings with maximum-entropy IRL ([`irl`]), and order new
//! explanations by maximizing that reward ([`search`]). [`escape_room`] is
//! the grid-maze evaluation domain.

pub mod error;
pub mod escape_room;
pub mod irl;
pub mod mdp;
pub mod model;
pub mod planner;
pub mod reconciliation;
pub mod search;

pub use error::{Error, Result};

//! Multi-objective reinforcement learning for generating critical driving
//! scenarios.
//!
//! A testing agent repeatedly spawns NPC vehicles and pedestrians around a
//! simulated autonomous vehicle (AV), trying to make it violate a safety
//! requirement (no collision) and a functional requirement (finish the route
//! within a time budget) at the same time. The crate contains the driving
//! simulator, the objective and reward functions, the multi-objective MDP
//! wrapper, a small neural network stack, Envelope Q-learning, the random and
//! scalarized-DQN baselines, the statistics used to compare them, and the
//! harness that ties everything to files on disk.

pub mod baselines;
pub mod eql;
pub mod error;
pub mod harness;
pub mod momdp;
pub mod nn;
pub mod objectives;
pub mod par;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};

//! Core of a minimal model-based cognitive agent.
//!
//! The agent perceives its world through camera frames, keeps a low
//! dimensional [`BeliefVector`](types::BeliefVector), anticipates the effect of
//! actions with a learned transition model, and chooses actions by evolving a
//! pool of candidate plans against a learned contentment (utility) model.

pub mod agent;
pub mod approximator;
pub mod bootstrap;
pub mod contentment;
pub mod env;
pub mod error;
pub mod learning;
pub mod planner;
pub mod types;

pub use approximator::Approximator;
pub use contentment::ContentmentModel;
pub use error::{Error, Result};
pub use learning::LearningSystem;
pub use planner::{Plan, PlanPool};
pub use types::{ActionSpace, ActionVector, BeliefVector, FrameDims, Observation};

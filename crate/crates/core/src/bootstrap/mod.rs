//! Three-step bootstrap: gather a random walk, estimate beliefs by nonlinear
//! dimensionality reduction, then train the learning system supervised.

pub mod dataset;
pub mod nldr;
pub mod pretrain;

pub use dataset::{collect_held_walk, collect_random_walk, BeliefEstimates, WalkDataset};
pub use nldr::estimate_beliefs;
pub use pretrain::{continue_training, pretrain, ModelLog, TrainConfig, TrainingLog};

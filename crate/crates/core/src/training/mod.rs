//! Joint model, training loop and hyperparameter search.

pub mod config;
pub mod model;
pub mod search;
pub mod trainer;

pub use config::TrainConfig;
pub use model::{JointModel, Prepared};
pub use search::{grid_search, multi_seed, multi_seed_with, render_search, MultiSeedReport, SearchResult, SearchSpace};
pub use trainer::{train, EpochRecord, RunResult};

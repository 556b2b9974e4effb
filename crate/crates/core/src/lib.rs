pub mod baselines;
pub mod error;
pub mod eval;
pub mod game;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod tree;
pub mod tso;

pub use error::{Error, Result};
pub use game::{
    expected_utility, AttackerAction, CandidateRule, DefenderAction, DefenderSpec, Game,
    MixedStrategy, PayoffMatrix,
};
pub use graph::{Edge, GameGraph, GraphFile, Placement, Topology};
pub use tree::{ActionMask, ActionTree, Child, Player};
pub use policy::{GradientAccumulator, NodeCache, Optimizer, OptimizerConfig, PolicyConfig, TreePolicy};
pub use eval::{duality_gap, extract_mixed_strategy, win_rate_matrix, EnumeratedGame, WinRateMatrix};
pub use metrics::{MetricsRow, MetricsSink, METRICS_HEADER};
pub use tso::{Hyperparameters, Trainer};
pub use harness::{run_experiment, Algorithm, RunManifest, ScenarioConfig};

//! Reference solvers: flat Nash-advantage-loss training and double oracle.

pub mod best_response;
pub mod double_oracle;
pub mod flat_nal;
pub mod matrix_solver;

pub use best_response::best_response;
pub use double_oracle::{double_oracle, DoConfig, DoOutcome, PoolSnapshot};
pub use flat_nal::{flat_defaults, FlatTrainer};
pub use matrix_solver::{solve, solve_exact, solve_restricted, Averaging, SolveResult};

//! Signum-accelerated, all-time feasible distributed resource allocation.

pub mod checks;
pub mod cli;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod nonlinearity;
pub mod oracle;

pub use cost::{AgentCost, CostModel, PenaltyKind, PenaltySpec, QuadraticCost};
pub use dynamics::{SimState, StepMode, StepParams};
pub use graph::{GraphSchedule, SwitchPolicy, WeightScheme, WeightedGraph};
pub use nonlinearity::Nonlinearity;
pub use oracle::OracleSolution;
pub use experiment::{ExperimentConfig, MetricsRecord};

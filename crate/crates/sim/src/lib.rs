//! Simulation laboratory for the constrained domain-mean estimator: scenario
//! presets, finite-population synthesis, stratified and cluster sampling with
//! exact joint inclusion probabilities, and a deterministic replication
//! engine.
//!
//! Reproducibility contract: a `(ScenarioConfig, seed)` pair maps to a
//! bit-identical [`engine::SimulationSummary`] regardless of worker count.
//! The population is generated on a reserved ChaCha stream and replicate `i`
//! draws on stream `i`, so parallel execution cannot reorder randomness;
//! per-replicate records are merged in replicate order.

pub mod design;
pub mod engine;
pub mod scenario;
pub mod tables;

pub use design::{draw_cluster_sample, draw_stsi_sample, ClusterFrame, StratifiedFrame};
pub use engine::{mse_accumulate, pse_monte_carlo, run_replications, SimulationSummary};
pub use scenario::{
    generate_population, make_scenario_means, DesignChoice, PopulationDist, ScenarioConfig, Shape,
    Sigmoid,
};
pub use tables::{table_preset, Scale, TableCell, TableSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("population size {n} is not divisible by {divisor} ({what})")]
    IndivisibleSizes {
        n: usize,
        divisor: usize,
        what: &'static str,
    },
    #[error("allocation infeasible: stratum {stratum} asks {requested} of {available} units")]
    InfeasibleAllocation {
        stratum: usize,
        requested: usize,
        available: usize,
    },
    #[error("allocation must name {expected} strata, got {got}")]
    AllocationLength { expected: usize, got: usize },
    #[error("cluster count {requested} exceeds the {available} available")]
    TooManyClusters { requested: usize, available: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Design(#[from] isocrit_core::survey::DesignError),
    #[error(transparent)]
    Pipeline(#[from] isocrit_core::pipeline::PipelineError),
}

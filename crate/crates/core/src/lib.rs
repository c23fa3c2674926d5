//! Simulation and analysis of federated learning under correlated client
//! participation with a minimum-separation constraint.
//!
//! * [`chain`]: the participation process, its exact augmented chain,
//!   stationary marginals and mixing diagnostics.
//! * [`estimate`]: Monte Carlo marginals and the running frequency estimator.
//! * [`objectives`]: local objectives, synthetic data and client grouping.
//! * [`sim`]: FedAvg, Debiasing FedAvg and oracle baselines.

pub mod chain;
pub mod error;
pub mod estimate;
pub mod objectives;
pub mod profile;
pub mod rng;
pub mod sim;

pub use chain::exact::{marginal_participation, stationary_distribution};
pub use chain::mixing::tau_mix;
pub use chain::{
    chain_period, column_sums, distance_to_uniform, enumerate_exact_chain, mixing_time, sample_next_batch, tv_decay,
    ChainConfig, ChainState, ExactChain, ExactOptions, HistoryWindow, OrderedBatch,
};
pub use error::{Error, Result};
pub use estimate::{
    estimate_pi, estimator_error_trace, marginal_evolution, mean_estimator_error, FrequencyEstimator, MarginalEstimate,
    MarginalEvolution,
};
pub use objectives::{
    generate_synthetic, global_metrics, group_problem, quadratic_toy, GlobalMetrics, GroupMap, LocalObjective, Problem,
    SyntheticDataset, SyntheticSpec,
};
pub use profile::{make_profile, AvailabilityProfile};
pub use sim::{
    run_debiased_fedavg, run_debiased_fedavg_frozen, run_fedavg, run_known_pi, run_oracle_uniform, Algorithm,
    HyperParams, RunTrace,
};

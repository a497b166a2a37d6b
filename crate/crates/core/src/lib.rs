//! Offline reinforcement learning with the discount factor as a regularizer.
//!
//! The crate covers tabular MDPs and their exact solvers, support-constrained
//! and robust value iteration, pessimistic value iteration on linear MDPs,
//! coverage coefficients and suboptimality bounds, and seeded sweep harnesses
//! that compare learning discounts against a fixed evaluation discount.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the precision.

// Negated comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod io;
pub mod mdp;
pub mod offline;
pub mod pevi;
pub mod scalar;
pub mod solvers;

pub use analysis::{
    behavior_distribution, bound_report, coverage_coefficient, discount_grid, lemma1_gap, lemma2_bound,
    optimal_guidance_gamma, policy_coverage, theorem1_bound, theorem2_bound, verify_lemma1, BoundInputs, BoundRow,
    CoverageAggregation, SandwichCheck,
};
pub use error::{Error, Result};
pub use experiments::{run_sweep, SweepConfig, SweepKind, SweepOutput};
pub use generators::{
    behavior_policy, empirical_mdp, random_mask, random_tabular_mdp, sample_dataset, widen_mask, Dataset,
    ExperimentSeed, Mask, Transition, UnseenPairModel,
};
pub use mdp::{LinearMdp, Policy, QTable, TabularMdp, VTable};
pub use offline::{
    bcq_value_iteration, check_lemma3, empirical_value_iteration, estimation_error, generalized_value_iteration,
    robust_value_iteration, EquivalenceCheck, MixtureModelSet, RobustResult, SupportConstraint,
};
pub use pevi::{pevi, theoretical_beta, FeatureMap, OneHotFeatures, PeviConfig, PeviResult, TableFeatures};
pub use scalar::Scalar;
pub use solvers::{
    occupancy_measure, policy_evaluation, policy_evaluation_exact, suboptimality, value_iteration, OccupancyStart,
    SolveOptions, ValueIterationResult,
};

pub type TabularMdp64 = TabularMdp<f64>;
pub type TabularMdp32 = TabularMdp<f32>;
pub type LinearMdp64 = LinearMdp<f64>;
pub type LinearMdp32 = LinearMdp<f32>;
pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;
pub type QTable64 = QTable<f64>;
pub type QTable32 = QTable<f32>;
pub type VTable64 = VTable<f64>;
pub type VTable32 = VTable<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type SolveOptions64 = SolveOptions<f64>;
pub type SolveOptions32 = SolveOptions<f32>;
pub type BoundInputs64 = BoundInputs<f64>;
pub type BoundInputs32 = BoundInputs<f32>;

//! Off-policy evaluation for tabular MDPs via marginalized importance
//! sampling, with state abstraction.
//!
//! The library covers the full pipeline:
//!
//! * [`mdp`]: finite MDPs, policies, validation;
//! * [`dataset`]: seeded trajectory sampling, offline datasets and their
//!   projections into an abstract state space;
//! * [`twopath`]: the TwoPath benchmark domain and its assumption-violating
//!   variants;
//! * [`abstraction`]: partition maps, weighting functions, abstract MDP and
//!   policy construction, and validators for the three abstraction
//!   assumptions;
//! * [`mod@occupancy`]: exact occupancy measures, policy values, density ratios
//!   and variance diagnostics (the oracle everything else is tested against);
//! * [`estimators`]: MIS estimators (plain, discount-weighted and
//!   self-normalized) plus bias/variance measurement across seeded datasets;
//! * [`dice`]: the BestDICE saddle-point solver for ratio estimation in the
//!   ground or abstract space, with analytic gradients and an exact
//!   saddle-point oracle;
//! * [`family`]: seeded random MDP families for property batteries.

pub mod abstraction;
pub mod dataset;
pub mod dice;
pub mod estimators;
pub mod family;
pub mod mdp;
pub mod occupancy;
pub mod rng;
pub mod twopath;

pub use abstraction::{
    build_abstract_mdp, build_abstract_policy, check_action_equality, check_reward_equality,
    check_transition_similarity, weights_from_policy, AbstractMdp, AbstractionMap,
    AssumptionReport, WeightingFunction,
};
pub use dataset::{
    generate_dataset, project_dataset, sample_trajectory, AbstractDataset, Dataset, Transition,
};
pub use dice::{
    dice_fit, dice_fit_abstract, saddle_point_oracle, DiceConfig, DiceSolution, DiceState,
};
pub use estimators::{
    abstract_mis_estimate, bias_variance_report, mis_estimate, plain_mse, relative_mse,
    weighted_mis_estimate, EstimateRecord, EstimatorKind, RatioFunction, SampleWeighting,
};
pub use mdp::{Policy, TabularMdp};
pub use occupancy::{
    abstract_occupancy, occupancy, per_step_covariance, policy_value, ratio_variance, true_ratios,
    OccupancyMeasure, RatioTable,
};
pub use twopath::{build_twopath, TwoPathParts, TwoPathVariant};

//! Online forecasters with swap multicalibration guarantees for elicitable
//! properties (means, quantiles, expectiles, raw moments).
//!
//! The forecaster commits each round to a distribution over at most two
//! adjacent grid points, chosen so that the expected gain of every expert in
//! a two-layer multiplicative-weights auditor is non-positive up to a grid
//! discretization term. Two auditor engines are provided: one enumerating a
//! finite hypothesis class directly, and an oracle-efficient one that replaces
//! the class with per-bin online agnostic learners.

pub mod adversary;
pub mod error;
pub mod expert;
pub mod forecaster;
pub mod harness;
pub mod hypothesis;
pub mod learner;
pub mod metrics;
pub mod property;

pub use adversary::{Adversary, AdversarySpec, ContextLaw};
pub use error::{Error, Result};
pub use expert::ExpertState;
pub use forecaster::{
    solve_distribution, Forecaster, GridConfig, PhiProfile, Prediction, RoundOutput, RoundRecord,
    TwoPointDistribution,
};
pub use hypothesis::{ClassSpec, Context, HypothesisClass, TestFunction, Witness};
pub use learner::AgnosticLearner;
pub use metrics::{aggregate, cal, mcal, smcal, BinAggregate, McalValue, Transcript};
pub use property::{LabelLaw, Property, PropertyKind};

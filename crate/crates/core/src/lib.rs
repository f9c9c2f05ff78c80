//! Simulation of a continuous phonetic parameter passed down generations of
//! learners under a coarticulatory channel bias and a categorical prior.
//!
//! The [`analytic`] module gives closed-form moment recurrences for naive and
//! Gaussian-prior learners. [`simulate`] runs the same dynamics as an
//! agent-based Monte Carlo, including the quadratic prior that has no closed
//! form, and [`sweep`] maps final states over parameter grids.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod crosscheck;
pub mod exec;
pub mod learning;
pub mod model;
pub mod numerics;
pub mod output;
pub mod simulate;
pub mod sweep;

pub use exec::Execution;
pub use model::{
    validate_config, Config, ConfigBuilder, ConfigError, LearningConfig, MomentState, ParseError,
    PhoneticModel, PopulationConfig, PopulationState, PriorSpec, TeacherRule, ValidationReport,
};

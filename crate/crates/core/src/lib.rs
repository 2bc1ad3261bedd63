//! Calibration engine for three-alternative forced-choice identity tests.
//!
//! - [`triads`] mines confusable triads from identity-labelled embeddings and
//!   audits them with a similarity-driven simulated observer.
//! - [`irt`] fits 1PL/2PL/3PL logistic models by marginal maximum likelihood,
//!   scores abilities and reports information, precision and fit.
//! - [`assembly`] splits a calibrated bank into test forms of targeted difficulty.
//! - [`analysis`] projects cohorts onto a model and runs the group statistics.
//! - [`simulation`] generates synthetic data, brute-force oracles and recovery reports.
//! - [`session`] administers fixed or adaptive forms with an append-only event log.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod irt;
pub mod rng;
pub mod schema;
pub mod session;
pub mod simulation;
pub mod triads;

pub use error::{Error, Result};
pub use irt::{
    estimate_ability, fit_em, irf, item_information, standard_error_curve, test_information, AbilityMethod, EmConfig,
    FittedModel, ItemParameters, LatentAbility, ModelFamily, QuadratureSpec, ResponseMatrix,
};

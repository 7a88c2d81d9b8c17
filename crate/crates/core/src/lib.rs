//! Estimation and two-sample comparison of mean survival times of uncured
//! sub-populations under right censoring.
//!
//! The crate provides
//!
//! - product-limit estimation with cure fraction and its variance process
//!   ([`km`]),
//! - nonparametric mean-survival-time-of-uncured estimates with plug-in
//!   variances and studentized two-sample statistics ([`mst`]),
//! - normal-approximation and studentized-permutation inference, plus a
//!   cure-fraction comparison test ([`inference`]),
//! - EM maximum likelihood for the logistic-Cox mixture cure model with the
//!   zero-tail constraint and covariate-conditional mean survival times
//!   ([`cure`]),
//! - bootstrap variances and nested permutation inference for conditional
//!   comparisons ([`inference_sp`]),
//! - reproducible parallel resampling ([`resampling`]) and a Monte Carlo
//!   harness over the built-in simulation settings ([`sim`]).
//!
//! All numerics are generic over the scalar type via [`real::Real`]; the
//! aliases below fix `f64`, which is what the command-line tool uses.

pub mod cure;
pub mod data;
pub mod error;
pub mod inference;
pub mod inference_sp;
pub mod km;
pub mod mst;
pub mod normal;
pub mod real;
pub mod resampling;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
pub use inference::{Method, PermutationPlan};
pub use resampling::{ReplicateStream, Scheme};

/// Schema version stamped into JSON artifacts.
pub const SCHEMA_VERSION: u32 = 1;

// `f64` instantiations of the generic core.
pub type SurvivalRecord = data::SurvivalRecord<f64>;
pub type SurvivalSample = data::SurvivalSample<f64>;
pub type TwoSampleDataset = data::TwoSampleDataset<f64>;
pub type KmFit = km::KmFit<f64>;
pub type MstEstimate = mst::MstEstimate<f64>;
pub type TwoSampleMst = mst::TwoSampleMst<f64>;
pub type InferenceResult = inference::InferenceResult<f64>;
pub type LogisticCoxFit = cure::LogisticCoxFit<f64>;
pub type EmConfig = cure::EmConfig<f64>;
pub type Baseline = cure::Baseline<f64>;
pub type ConditionalMstResult = inference_sp::ConditionalMstResult<f64>;
pub type SettingSpec = sim::SettingSpec<f64>;
pub type GroupSpec = sim::GroupSpec<f64>;
pub type LatencyFamily = sim::LatencyFamily<f64>;

//! Character-level conditional distribution matching for unsupervised domain
//! adaptation of a toy CTC-attention recognizer.
//!
//! The core is generic over the scalar type ([`numkit::Scalar`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`, which is what the
//! CLI and the experiment harness use.

pub mod adapt;
pub mod assign;
pub mod corpus;
pub mod config;
pub mod ctc;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mmd;
pub mod model;
pub mod numkit;

pub use error::{Error, Result};

pub type Matrix64 = numkit::Matrix<f64>;
pub type Matrix32 = numkit::Matrix<f32>;
pub type Lattice64 = ctc::LogProbLattice<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type Corpus64 = corpus::DomainCorpus<f64>;
pub type Corpus32 = corpus::DomainCorpus<f32>;

//! Bayesian location-scale modelling of intra-individual variability.
//!
//! Each subject's latent mean and latent standard deviation are estimated
//! from a handful of repeated measures and used, with partial pooling, as
//! predictors of a between-person outcome (optionally through a mediator).
//! The crate also provides the classical individual-SD regression used as a
//! comparator, convergence diagnostics, posterior summaries and a Monte
//! Carlo harness for bias/coverage/power studies.

// NaN must fail positivity and acceptance checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod diagnostics;
pub mod inference;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulation;

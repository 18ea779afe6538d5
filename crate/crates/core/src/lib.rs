//! Capacity-coupled risk bounds for a two-stage feedback channel `U -> H -> Y`
//! observed together with a context `S`.
//!
//! The crate builds Delta-separable codebooks, computes the stage capacities of
//! finite channel families exactly, evaluates the Fano risk floor and the
//! PAC-Bayes ceiling on the same codebook mixture, and audits the information
//! identities behind them by exhaustive enumeration.
//!
//! Modules, bottom-up:
//! - [`probcore`]: entropy, KL, (conditional) mutual information on dense tables.
//! - [`channel`]: cascades, channel families, capacities, dataset sampling.
//! - [`codebook`]: separable codebooks, index decoders, mixtures, observable losses.
//! - [`bounds`]: closed-form floors, ceilings and budgets.
//! - [`learner`]: decoders, Gibbs posteriors, information audits, compression.
//! - [`experiment`]: configs, sweeps and the invariant suite behind the CLI.

#![forbid(unsafe_code)]
// `!(x >= 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod codebook;
mod error;
pub mod experiment;
pub mod learner;
pub mod probcore;
pub mod rng;

pub use error::{Error, Result};

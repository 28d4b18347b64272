//! Exact decision-rule-list extraction from feed-forward ReLU networks over
//! one-hot encoded categorical features, plus an evaluation harness for
//! fidelity, comprehensibility and error analysis.
//!
//! The crate decomposes a trained network neuron by neuron. Every neuron's
//! output is a piecewise linear function of the input features, so it can be
//! represented as a prefix-free, space-covering list of (rule, linear
//! behavior) pairs. Composing these lists layer by layer yields an output
//! rule list whose class decisions match the network on every possible input,
//! which `evaluation::verify_exhaustive` checks by enumeration.

pub mod baselines;
pub mod binning;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod model;
pub mod rules;
pub mod schema;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};

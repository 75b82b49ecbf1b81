//! Spatial prisoner's dilemma populations of deep Q-learning agents.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod explore;
pub mod game;
pub mod learner;
pub mod net;
pub mod sim;

pub use error::{Error, Result};

//! Saddle-node bifurcation analysis of PWM DC-DC converters.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod average;
pub mod cli;
pub mod error;
pub mod harmonic;
pub mod matnum;
pub mod model;
pub mod plot;
pub mod sdstab;
pub mod steady;
pub mod sweep;

pub use error::{Error, Result};

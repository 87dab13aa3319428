//! Simulation and analysis of multi-level time-bin photonic cluster states.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bessel;
pub mod channel;
pub mod config;
pub mod cpm;
pub mod detection;
pub mod encoding;
pub mod error;
pub mod modes;
pub mod pipeline;
pub mod source;
pub mod waveform;

pub use error::{Error, Result};

//! Simulation and energy-decay analysis for the one-dimensional Love equation
//! with an infinite-memory viscoelastic term.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod decay;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod history;
pub mod kernel;
pub mod mms;
pub mod quad;
pub mod solver;
pub mod trace;

pub use error::{Error, Result};

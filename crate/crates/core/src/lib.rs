//! Reinforcement-learning workbench for a pitch-plane missile autopilot.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: surrogate longitudinal airframe, fin mixing, saturated
//!   second-order actuator and the non-nominal perturbations.
//! - [`signal`]: randomised double-step commands, the reference model and
//!   transition/resting period tagging.
//! - [`env`]: one agent/plant episode, the reward, online observation
//!   normalisation and performance scoring.
//! - [`nn`]: small dense networks with exact backpropagation and ADAM.
//! - [`trpo`]: Gaussian policy, GAE and the penalised trust-region losses.
//! - [`replay`]: FIFO replay buffer with hindsight relabelling, balanced
//!   rank-prioritised sampling and the scheduling gate.
//! - [`train`]: the full training loop, curriculum, robustifying trainings
//!   and robustness sweeps.
//! - [`config`], [`checkpoint`], [`report`]: operational surface used by the
//!   command-line tool.
//!
//! Data-parallel loops (episode batches, sweeps, minibatch gradients) go
//! through [`exec`], which uses rayon when the `parallel` feature is enabled
//! and falls back to plain iterators otherwise.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod exec;
pub mod nn;
pub mod replay;
pub mod report;
pub mod signal;
pub mod train;
pub mod trpo;

pub use error::{Error, Result};

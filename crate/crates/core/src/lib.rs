//! Curiosity-driven co-development of action and language.
//!
//! A simulated crane robot hears an imperative sentence ("push left red cone"),
//! acts in a small kinematic arena, and learns through a variational recurrent
//! forward model plus a soft actor-critic whose rewards combine the extrinsic
//! goal signal, per-modality KLD curiosity and motor entropy.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command line and
//! run directories live in the `codev` companion crate.
//!
//! Module map:
//!
//! - [`env`]: arena simulation, sensors, success events
//! - [`language`]: vocabulary, one-hot codec, compositional splits
//! - [`fe`]: KLD, free energy, curiosity and the augmented Q target
//! - [`fm`]: variational recurrent forward model
//! - [`agent`]: twin-critic soft actor-critic on the forward model's hidden state
//! - [`replay`]: padded episode buffer
//! - [`harness`]: training schedule, evaluation, seed aggregation
//! - [`analysis`]: PCA of command latents, dream rollouts

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod analysis;
pub mod env;
pub mod error;
pub mod fe;
pub mod fm;
pub mod graph;
pub mod harness;
pub mod language;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};

/// Steps per episode.
pub const EPISODE_STEPS: usize = 30;

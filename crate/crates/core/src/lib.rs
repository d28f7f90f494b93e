//! Generative modelling with goal-conditioned reinforcement learning.
//!
//! A goal-conditioned agent learns to steer a fixed initial state onto
//! training points (the goals) by picking, at each of `H` steps, one of `A`
//! actions emitted by a shared proposal network. A goal-agnostic selection
//! network imitates those picks, and sampling it at inference time yields a
//! generative model whose support has at most `A^H` points.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! - [`grad`]: a small reverse-mode autodiff engine over dense `f64` arrays,
//!   Adam, and a finite-difference oracle.
//! - [`env`]: the additive-dynamics MDP and its goal-conditioned loss.
//! - [`agents`]: proposal, selection and dueling Q networks.
//! - [`replay`]: the three FIFO replay buffers.
//! - [`training`]: trajectory generation and the three network updates.
//! - [`inference`]: sampling, reconstruction and support enumeration.
//! - [`oracle`]: exact checks of the variational bound on finite MDPs.
//! - [`data`], [`eval`]: synthetic datasets and evaluation metrics.
//!
//! File formats, configuration and the command line live in the `vagent`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod data;
pub mod env;
mod error;
pub mod eval;
pub mod grad;
pub mod gradcheck;
pub mod inference;
pub mod nn;
pub mod oracle;
pub mod replay;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is a closed, acyclic list of primitive ops whose storage order
//! is a topological order. [`forward`] evaluates it against a [`ParamSet`]
//! and a list of input tensors and returns a [`Tape`]; [`Tape::backward`]
//! turns seed gradients on the graph outputs into one gradient per parameter.
//!
//! ```
//! use vagent_core::grad::{forward, GraphBuilder, ParamSet, Tensor};
//!
//! // f(w) = w^2
//! let mut g = GraphBuilder::new();
//! let w = g.param(0, &[1]);
//! let y = g.square(w).unwrap();
//! let graph = g.finish(&[y]);
//!
//! let params = ParamSet::new(vec![Tensor::vector(vec![3.0])]);
//! let (out, tape) = forward(&graph, &params, &[]).unwrap();
//! assert_eq!(out[0].data(), &[9.0]);
//! let grads = tape.backward(&params, &[Tensor::vector(vec![1.0])]).unwrap();
//! assert_eq!(grads[0].data(), &[6.0]);
//! ```

mod adam;
mod check;
mod gemm;
mod graph;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use check::{finite_diff, max_relative_error, relative_error, RELATIVE_ERROR_FLOOR};
pub use graph::{Graph, GraphBuilder, NodeId, Op};
pub use params::ParamSet;
pub use tape::{forward, Tape};
pub use tensor::Tensor;

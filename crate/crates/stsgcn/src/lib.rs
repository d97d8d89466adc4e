#![allow(clippy::needless_range_loop)]

//! Pose forecasting with a space-time-separable graph convolutional encoder
//! and a temporal-convolution decoder.
//!
//! The encoder learns signed, directed affinity matrices relating joints
//! (spatial) and frames (temporal); factoring the dense space-time adjacency
//! into these two stacks is what keeps the model small. Four encoder variants
//! are provided for comparison: the factored design, the dense non-separable
//! graph, separate space/time networks, and the factored design with
//! adjacencies shared across layers.
//!
//! Everything runs on a small self-contained f64 tensor engine with
//! tape-based reverse-mode differentiation; see the `examples/` directory for
//! runnable entry points covering each capability.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{grad_check, BatchNormState, Tape, Tensor, Var};

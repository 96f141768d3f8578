//! Deep Q-learning with experience replay, built from scratch on small
//! pixel environments.
//!
//! The crate provides the full training stack as separate, individually
//! testable pieces:
//!
//! - [`tensor`]: row-major tensors with the dense/convolutional kernels and
//!   their hand-derived backward passes.
//! - [`nn`]: the Q-network (conv → conv → fully connected → linear head),
//!   parameter initialization, analytic gradients, and a finite-difference
//!   gradient oracle.
//! - [`optim`]: RMSProp.
//! - [`env`]: built-in environments (Catch, GridWorld, a table-defined MDP)
//!   behind one stepping interface, plus a value-iteration solver.
//! - [`preprocess`]: grayscale / downsample / crop / frame stacking.
//! - [`replay`]: fixed-capacity replay memory with uniform sampling.
//! - [`agent`]: epsilon-greedy control, reward clipping, frame skipping,
//!   Bellman targets, and the per-decision training step.
//! - [`config`] and [`harness`]: the `key = value` run configuration, the
//!   training loop, evaluation, held-out Q tracking, metrics CSV, and
//!   checkpoints.
//!
//! See the book under `book/` for a guided tour; its code snippets are
//! compiled and run as doctests.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod preprocess;
pub mod replay;
pub mod tensor;

pub use error::{Error, Result};

//! Core library for the plasticity lab: hand-rolled differentiable
//! networks, temporal-difference training on synthetic MDPs, loss-landscape
//! diagnostics, and the experiment drivers behind the `plab` CLI.
//!
//! Everything is `f64` and deterministic: all randomness flows from a
//! single run seed through named streams (see [`rng`]), so a run with the
//! same configuration and seed reproduces its outputs byte for byte.

pub mod data;
pub mod error;
pub mod nn;
pub mod optim;
pub mod rng;

pub use error::{PlabError, Result};
pub use nn::{Batch, NetworkSpec, ParamVector};

//! Numerical core for full-field elastoplastic stress surrogates.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the whole
//! compute path: structured-grid finite elements, SIMP topology
//! optimization, J2 plane-stress plasticity, sample batching, a small
//! reverse-mode tensor runtime, and the three surrogate networks.
//! File formats, the training loop, and the CLI live in the `opstress`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod fe;
pub mod metrics;
pub mod nn;
pub mod plasticity;
pub mod surrogates;
pub mod topopt;

pub use error::{Error, Result};

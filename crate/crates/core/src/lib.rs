//! Numerical core for realized-volatility forecasting of half-hourly spot
//! electricity prices.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command line, network providers and caching live in the `spotvol` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod market_data;
pub mod models;
pub mod optim;
pub mod rag;
pub mod realized;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

//! Core algorithms for a miniature top-down disclosure avoidance system and
//! the approximate Monte Carlo (AMC) method for estimating the bias,
//! variance, mean squared error and confidence intervals of its outputs.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the staged
//! pipeline and the command line live in the `tdamc` crate.
//!
//! Module map:
//!
//! * [`model`]: attribute schemas, geographic hierarchies and sparse histograms.
//! * [`noise`]: privacy-loss budget allocation and the exact discrete Gaussian
//!   mechanism.
//! * [`topdown`]: post-processing of noisy measurements into non-negative,
//!   integral, hierarchically consistent histograms.
//! * [`query`]: count queries, workloads and query size groups.
//! * [`simulate`]: Monte Carlo and approximate Monte Carlo replicate sets.
//! * [`intervals`]: moment estimates and the eight confidence interval types.
//! * [`evaluate`]: coverage, width, bias and iteration-count analyses.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod dist;
pub mod error;
pub mod evaluate;
pub mod intervals;
pub mod model;
pub mod noise;
pub mod query;
pub mod rng;
pub mod simulate;
pub mod topdown;

pub use error::{Error, Result};

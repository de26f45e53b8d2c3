//! Rare-attack intrusion detection on tabular network traffic.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! piece of the pipeline:
//!
//! * [`dataset`]: schema-typed rows, min-max/one-hot preprocessing,
//!   stratified splitting and a seeded generator of ECU-IoFT-like traffic.
//! * [`augment`]: SMOTE interpolation and a per-class Gaussian-mixture
//!   synthesizer for raising rare classes to a target count.
//! * [`neural`]: a small dense-network engine with exact per-sample
//!   gradients.
//! * [`vime`]: zero-mask self-supervised pretraining of an encoder.
//! * [`privacy`]: DP-SGD (clipping + Gaussian noise on the summed gradient)
//!   and a Rényi-DP accountant for the Poisson-subsampled Gaussian.
//! * [`evalx`]: confusion matrices and macro-averaged metrics.
//! * [`explain`]: permutation-sampling Shapley attribution.
//! * [`pipeline`]: the end-to-end experiment, k-fold CV and the
//!   noise-multiplier grid.
//!
//! File formats, CSV ingestion and the command-line front end live in the
//! `privfly` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod dataset;
mod error;
pub mod evalx;
pub mod explain;
pub(crate) mod math;
pub mod neural;
pub mod pipeline;
pub mod privacy;
pub mod rng;
pub mod vime;

pub use error::{Error, ErrorKind, Result};

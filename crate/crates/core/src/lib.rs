//! Robust learner for monotone single-index models `y ≈ σ(w*·x)` with
//! standard-normal covariates and adversarially corrupted labels.
//!
//! The crate is `no_std` with `alloc`. Enable `std` for `std::error::Error`
//! integration and `parallel` to spread spectral runs and candidate fits
//! over a rayon pool.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod gauss;
pub mod initializer;
pub mod isotonic;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Activation, Dataset, Hypothesis, RegularityParams};

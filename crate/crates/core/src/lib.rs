//! Kingman's coalescent, its construction from the local-time profile of a
//! Brownian excursion, the Yule-tree duality, and the statistics used to check
//! them by simulation.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::explicit_counter_loop)]

pub mod error;
pub mod excursion;
pub mod experiment;
pub mod feller;
pub mod kingman;
pub mod rng;
pub mod stats;
pub mod yule;

pub use error::{Error, Result};

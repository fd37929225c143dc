//! Optimal regulation of an M/G/1 queue whose customers choose their own
//! service durations.
//!
//! Customers carry a random net marginal value path `V(s)`. The planner's
//! rule serves each customer until `V(s) - c s` first falls to a threshold
//! `x`. [`solver`] finds the welfare-maximising `(c, x)` pair and
//! [`pricing`] turns it into a price schedule that customers follow on their
//! own. The [`simulator`] replays the queue to check the analysis.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balking;
pub mod error;
pub mod pricing;
pub mod quadrature;
pub mod retrial;
pub mod rng;
pub mod search;
pub mod simulator;
pub mod solver;
pub mod stats;
pub mod value_models;

pub use error::{Error, Result};

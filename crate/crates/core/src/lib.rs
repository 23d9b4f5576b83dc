//! Energy-efficient resource allocation for D2D pairs powered by a hovering
//! UAV: channel generation, the system model, a small dense barrier solver,
//! and three allocation algorithms.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod ee;
pub mod engine;
pub mod scenario;

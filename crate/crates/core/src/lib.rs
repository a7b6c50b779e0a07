//! Secure distributed parameter estimation over sensor networks: graph
//! tools, the consensus+innovations estimator with local attack flags,
//! adversary models, resilient scalar consensus, centralized detection and
//! identification, and a reproducible experiment harness.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod centralized;
pub mod consensus;
pub mod estimator;
pub mod harness;
pub mod measurement;
pub mod rng;
pub mod topology;

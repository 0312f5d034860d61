//! Directed polymers on disordered binary trees.
//!
//! Exhaustive enumeration of the partition functions at and near the
//! critical inverse temperature, exact sampling of the critical polymer
//! measure, spine (size-biased) random-walk estimators, the random-walk and
//! Brownian functionals behind the near-critical moment bounds, and the
//! replica estimators that tie them together.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// quadrature nodes and split constants are kept as published
#![allow(clippy::excessive_precision)]

pub mod cascade;
pub mod environment;
pub mod estimators;
pub mod error;
pub mod logsum;
pub mod quadrature;
pub mod replicas;
pub mod rng;
pub mod rwfunctional;
pub mod spine;
pub mod stats;

pub use environment::{CriticalPoint, EnvironmentModel};
pub use error::{Error, Result};

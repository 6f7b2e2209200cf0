//! Variable sample-size accelerated proximal methods for stochastic convex
//! optimization.

// `!(x > 0.0)` is the NaN-rejecting check used throughout parameter validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod prox;
pub mod reference;
pub mod rng;
pub mod schedules;
pub mod solvers;
pub mod smoothing;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{DenseVector, Matrix};
pub use oracle::{ProblemSpec, Scenario, StochasticProblem};
pub use rng::{make_rng, RandomSource};

//! Shallow decision-tree approximations of binary concepts over a stump
//! class on finite weighted domains.
//!
//! The crate builds instances `(X, P, c, H)`, computes exact minimal depths,
//! boosts weak trees level by level with a certified potential, solves the
//! depth-limited approximation game and compresses its solution into a single
//! exact tree, and measures formula complexity over the algebra generated by `H`.

// NaN inputs must fail the range checks written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod boosting;
pub mod demos;
pub mod error;
pub mod gcm;
pub mod instance;
pub mod minimax;
pub mod oracle;
pub mod tree;

pub use bits::Bits;
pub use error::{Error, Result};
pub use instance::{Distribution, Hypothesis, Instance};
pub use tree::DecisionTree;

//! Kernel bundles of holomorphic Fredholm families.
//!
//! Given a family `P(y, sigma)` of `n x n` matrices, holomorphic in `sigma`
//! and invertible away from a discrete set, this crate locates the singular
//! points, reduces near them to small Schur complements, builds canonical
//! root systems and the associated frames of the kernel bundle, and computes
//! the sesquilinear pairing with the dual bundle.

// `!(x < tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod family;
pub mod frames;
pub mod keldysh;
pub mod linalg;
pub mod pairing;
pub mod reduction;
mod serde_util;
pub mod shell;

pub use error::{Error, ErrorClass, Result};

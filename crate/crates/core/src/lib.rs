//! Numerical construction of embedded minimal annuli in warped products
//! S² ×_ω S¹, and the diagnostics used to study their limit lamination.
// NaN-rejecting `!(x > 0.0)` checks and index loops over small tensors are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod area;
pub mod charts;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod mesh;
pub mod metric;
pub mod pipeline;
pub mod solver;
pub mod stability;
pub mod verify;
pub mod warp;

pub use error::{Error, Result};

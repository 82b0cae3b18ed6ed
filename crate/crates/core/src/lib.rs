//! Quantization of probability measures under Bregman divergences and
//! matrix-field similarities, with numerical checks of the asymptotic
//! quantization error constants.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod divergence;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod numeric;
pub mod points;
pub mod quantize;
pub mod region;
pub mod zador;

pub use error::{Error, Result};
pub use points::Points;
pub use region::BoxRegion;

//! Synthetic aerial-imagery lab: orbit sweeps around a posed human target,
//! a deterministic software rasterizer with exact per-pixel object ids,
//! automatic box annotation, and AP-surface evaluation of detector output.

// negated float comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod error;
pub mod eval;
mod fsutil;
pub mod geometry;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod scene;

pub use error::{Error, Result};

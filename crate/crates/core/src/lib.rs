//! Point-language association for open-vocabulary 3D semantic segmentation.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem (scene/frame/embedding files, checkpoints, the CLI) lives in the
//! companion `pla` crate.
//!
//! Module map:
//!
//! - [`geometry`]: pinhole back-projection, voxel indexing, view overlap.
//! - [`index_set`]: sorted point index sets and their merge-based algebra.
//! - [`association`]: scene / view / entity point-caption pairs.
//! - [`text`]: embedding tables, category matrices, the hashing fallback embedder.
//! - [`model`]: toy encoder, adapter, binary head, losses and the training loop.
//! - [`eval`]: confusion matrices and base/novel/harmonic IoU reports.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod association;
pub mod autodiff;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod index_set;
pub mod linalg;
pub mod model;
pub mod text;

pub use error::{Error, Result};

/// Label sentinel for points excluded from losses and metrics.
pub const IGNORED: i32 = -1;

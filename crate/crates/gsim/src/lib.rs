//! Graph similarity learning: embedding and matching models over a tape-based
//! autodiff core, with a synthetic graph edit distance task, WL-kernel
//! baseline, and training/evaluation tooling.

pub mod batch;
pub mod checkpoint;
pub mod data;
pub mod embed;
pub mod error;
pub mod export;
pub mod ged_oracle;
pub mod graph;
pub mod loss;
pub mod matching;
pub mod metrics;
pub mod nn;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod wl;

pub use error::{Error, Result};

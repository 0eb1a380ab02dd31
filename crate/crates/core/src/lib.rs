//! Collaborative-confusion sequential recommendation.
//!
//! An item-wise modifier rewrites each user's interaction sequence (keep,
//! delete or insert per position), consulting similar users' sequences
//! through a copy mechanism, and a masked-item recommender is trained on both
//! the raw and the rewritten sequences. The crate contains everything needed
//! to run that end to end on a CPU: a small autodiff engine, data
//! preprocessing, self-supervised corruption, the model, the training loop and
//! the evaluation protocols.

pub mod autodiff;
pub mod corruption;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod seeds;
pub mod train;

pub use error::{Error, Result, TensorError};

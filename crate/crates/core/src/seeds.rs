//! Stage tags for deriving sub-streams from the global seed.
//!
//! Every random draw comes from `Rng::new(derive_seed(global, &[STAGE, ...]))`:
//!
//! | stage        | further tags                | used for                          |
//! |--------------|-----------------------------|-----------------------------------|
//! | `SYNTHETIC`  |                             | synthetic corpus                  |
//! | `INIT`       |                             | parameter initialisation          |
//! | `NEGATIVES`  | sequence, split             | frozen evaluation negatives       |
//! | `SHUFFLE`    | epoch                       | batch order                       |
//! | `CORRUPT`    | epoch, sequence             | modifier training examples        |
//! | `MASK`       | epoch, sequence, view       | recommender masking               |
//! | `DROPOUT`    | epoch, sequence             | dropout masks                     |
//! | `NOISE`      | sequence                    | robustness noise simulation       |

pub const SYNTHETIC: u64 = 1;
pub const INIT: u64 = 2;
pub const NEGATIVES: u64 = 3;
pub const SHUFFLE: u64 = 4;
pub const CORRUPT: u64 = 5;
pub const MASK: u64 = 6;
pub const DROPOUT: u64 = 7;
pub const NOISE: u64 = 8;

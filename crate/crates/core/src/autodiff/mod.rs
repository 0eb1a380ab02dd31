//! Minimal dense reverse-mode differentiation: tensors, a recording tape,
//! parameters with optimizer state, seeded randomness and initialisation.

pub mod init;
pub mod param;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use init::xavier_init;
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use rng::{derive_seed, Rng, RNG_ALGORITHM};
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;

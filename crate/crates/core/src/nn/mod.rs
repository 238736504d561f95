//! Minimal dense neural-network engine.
//!
//! Everything the predictors need and nothing more: row-major 2-d tensors, a
//! named parameter store with RMSprop, a small MLP with hand-written
//! backward passes, finite-difference gradient checking, and a textual
//! checkpoint format with exact float round-trips.

mod checkpoint;
mod gradcheck;
mod mlp;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use gradcheck::{grad_check, GradCheckReport};
pub use mlp::{MlpCache, MlpSpec};
pub use params::ParamStore;
pub use tensor::{accumulate_outer, matvec, matvec_t, Tensor2};

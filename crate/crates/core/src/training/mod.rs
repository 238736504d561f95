//! Gradient-descent training: losses, the epoch loop, and the ceiling sweep.

mod losses;
mod run;

pub use losses::{bce_loss, mse_loss, pairwise_loss, LossKind};
pub use run::{
    sweep_beta, train, train_grouped, write_sweep_table, write_timings, write_trainlog,
    EpochStats, TrainConfig, TrainLog,
};

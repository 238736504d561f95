//! Full scoring models: the grouped embedding predictor with pluggable
//! member aggregation, the collaborative-filtering baseline with groups as
//! virtual users, and the popularity baseline.

mod group;
mod model;
mod ncf;
mod popularity;

pub use group::{AggregatorKind, GroupCache, GroupPredictor, PredictorDims, UserCache};
pub use model::{ModelKind, ScoreCompose, TrainedModel};
pub use ncf::{NcfCache, NcfModel};
pub use popularity::{popularity_counts, popularity_rank};

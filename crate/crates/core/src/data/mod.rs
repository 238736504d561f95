//! Dataset model: canonical in-memory types, normalization, ingestion,
//! negative sampling, and the synthetic generator.

mod load;
mod normalize;
mod sampling;
mod synthetic;
mod types;

pub use load::{
    load_dataset, load_dataset_dir, write_dataset, DatasetPaths, IdMaps, LoadConfig, RatingRule,
    SplitSpec,
};
pub use normalize::{normalize_frequency, normalize_price};
pub use sampling::{sample_negatives, sample_negatives_for_row, NegativeSample};
pub use synthetic::{
    generate_synthetic, write_planted_sources, GenConfig, PlantedSource, SyntheticData,
};
pub use types::{
    derive_group_interactions, CatalogItem, Dataset, FeedbackKind, GroupDef, GroupId, Interaction,
    InteractionSet, ItemId, UserId, UserProfile,
};

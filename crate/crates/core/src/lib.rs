//! Group recommendation engine built around price-guided member weighting.
//!
//! A group's predicted affinity for an item is computed by aggregating member
//! embeddings with weights from an adaptive sigmoid: members who buy often get
//! more say, and the cheaper the item, the stronger that effect. The crate
//! bundles everything needed to exercise the idea end to end at desk scale:
//!
//! - [`data`]: dataset types, TSV ingestion, normalization, negative sampling,
//!   and a synthetic generator that plants a price-dependent influence signal;
//! - [`nn`]: a small dense-parameter engine (tensors, init, MLP, RMSprop,
//!   gradient checking, checkpoints);
//! - [`aggregation`]: the adaptive-sigmoid weighting plus reference
//!   aggregators (learned attention, uniform average, score composition);
//! - [`predictors`]: the group/user predictor with a shared MLP head, an NCF
//!   baseline over virtual group users, and a popularity baseline;
//! - [`training`]: losses, the epoch loop, and the beta sweep;
//! - [`evaluation`]: ranked evaluation over sampled candidates (HR/NDCG) and
//!   regression metrics (MSE/MAPE);
//! - [`analysis`]: frequent-buyer labeling, influence extraction, chi-square
//!   tests over price buckets, GMV curves, and a Welch t-test.
//!
//! Everything is deterministic given a seed: same seed, same bytes.

pub mod aggregation;
pub mod analysis;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod predictors;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

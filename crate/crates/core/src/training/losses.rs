//! Loss functions and their gradients.
//!
//! Each returns the per-sample loss together with the gradient the backward
//! pass needs. Batch reduction is the caller's job (mean over the batch).

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Probabilities are clamped this far inside (0, 1) before taking logs.
const BCE_CLAMP: f64 = 1e-12;

/// Which loss drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Squared hinge on score pairs: (pos - neg - 1)^2. Implicit feedback.
    Pairwise,
    /// Squared error against ratings. Explicit feedback.
    Mse,
    /// Binary cross-entropy on sigmoid outputs. Implicit feedback.
    Bce,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Pairwise => "pairwise",
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(LossKind::Pairwise),
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::Bce),
            other => Err(Error::invalid(
                "loss",
                format!("unknown loss '{other}' (expected pairwise, mse, or bce)"),
            )),
        }
    }
}

/// Squared margin loss on a (positive, negative) score pair. Zero exactly
/// when the positive leads by the unit margin. Returns
/// (loss, d/d pos_score, d/d neg_score).
pub fn pairwise_loss(pos_score: f64, neg_score: f64) -> (f64, f64, f64) {
    let diff = pos_score - neg_score - 1.0;
    (diff * diff, 2.0 * diff, -2.0 * diff)
}

/// Squared error against a known rating. Returns (loss, d/d prediction).
pub fn mse_loss(truth: f64, prediction: f64) -> (f64, f64) {
    let err = truth - prediction;
    (err * err, -2.0 * err)
}

/// Binary cross-entropy for a sigmoid output `p` against a 0/1 label.
/// Returns (loss, gradient at the pre-sigmoid logit), which is the
/// well-known p - label.
pub fn bce_loss(label: f64, p: f64) -> (f64, f64) {
    debug_assert!(label == 0.0 || label == 1.0);
    let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    let loss = -(label * q.ln() + (1.0 - label) * (1.0 - q).ln());
    (loss, q - label)
}

//! Common surface shared by every trained model.

use thiserror::Error;

use crate::dataset::{EncodedMatrix, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("training data is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rows are not on the P/A/N rating grid")]
    NotOnRatingGrid,
}

/// Returns an error unless both classes are present.
pub(crate) fn require_both_classes(m: &EncodedMatrix) -> Result<(), TrainError> {
    if m.n_rows() == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    match m.class_counts() {
        (0, _) | (_, 0) => Err(TrainError::SingleClassTraining),
        _ => Ok(()),
    }
}

/// A trained binary classifier over encoded rows.
pub trait Classifier {
    /// Higher means more likely Bankrupt. Probability for probabilistic
    /// models, vote fraction for forests, decision value for SVMs.
    fn score(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> Label;
}

/// Something that can fit a [`Classifier`] to an encoded matrix.
pub trait Trainer: Sync {
    type Model: Classifier + Send + Sync;

    fn fit(&self, m: &EncodedMatrix, seed: u64) -> Result<Self::Model, TrainError>;
}

/// B when `score >= threshold`, the conservative screening default.
pub fn threshold_label(score: f64, threshold: f64) -> Label {
    if score >= threshold {
        Label::Bankrupt
    } else {
        Label::NonBankrupt
    }
}

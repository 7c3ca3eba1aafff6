//! Qualitative bankruptcy risk assessment: corpus handling, feature screening,
//! five classifier families, cross-validated evaluation and model artifacts.

pub mod classifier;
pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod logistic;
pub mod model;
pub mod naive_bayes;
pub mod neural;
pub mod par;
pub mod persistence;
pub mod svm;

pub use classifier::{Classifier, TrainError, Trainer};
pub use dataset::{encode, load_dataset, Dataset, DatasetError, EncodedMatrix, Label, Rating, Record};
pub use evaluation::{k_fold_cv, CvResult, EvalError, Metrics};
pub use model::{Algorithm, ClassifierConfig, TrainedModel};
pub use par::Execution;

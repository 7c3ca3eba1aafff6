//! Versioned model artifacts and prediction CSV export.
//!
//! Artifacts are pretty-printed JSON with a fixed field order. Floats are
//! written in shortest round-trip form, so every parameter survives a
//! save/load cycle bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::Classifier;
use crate::dataset::{Label, Rating, Record, FEATURE_NAMES, N_FEATURES};
use crate::evaluation::Metrics;
use crate::model::{Algorithm, ClassifierConfig, TrainedModel};

pub const FORMAT_VERSION: u64 = 1;
pub const MODEL_EXTENSION: &str = "isvmodel";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("write failed: {0}")]
    SinkWrite(#[source] std::io::Error),
    #[error("read failed: {0}")]
    SourceRead(#[source] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {found} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("unsupported algorithm `{0}`")]
    UnsupportedAlgorithm(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("nothing to export")]
    EmptyExport,
}

impl PersistError {
    fn schema(message: impl Into<String>) -> Self {
        PersistError::Parse {
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for PersistError {
    fn from(e: serde_json::Error) -> Self {
        PersistError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInfo {
    /// Hex SHA-256 of the training CSV bytes.
    pub dataset_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// A fitted model plus everything needed to audit and serve it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub format_version: u64,
    pub config: ClassifierConfig,
    /// Input columns the model consumes, in order; a subset of the six ratings.
    pub features: Vec<String>,
    pub model: TrainedModel,
    pub training: TrainingInfo,
    pub metrics_summary: Option<Metrics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u64,
    algorithm: Algorithm,
    features: Vec<String>,
    hyperparameters: BTreeMap<String, Value>,
    parameters: Value,
    training: TrainingInfo,
    metrics_summary: Option<Metrics>,
}

pub fn dataset_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl ModelArtifact {
    pub fn new(
        config: ClassifierConfig,
        features: Vec<String>,
        model: TrainedModel,
        training: TrainingInfo,
        metrics_summary: Option<Metrics>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            features,
            model,
            training,
            metrics_summary,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.model.algorithm()
    }

    /// Positions of [`Self::features`] among the six rating columns.
    pub fn feature_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .map(|f| {
                FEATURE_NAMES
                    .iter()
                    .position(|n| n == f)
                    .expect("validated feature name")
            })
            .collect()
    }

    /// Model input for a full six-rating row.
    pub fn project(&self, row: &[f64; N_FEATURES]) -> Vec<f64> {
        self.feature_indices().iter().map(|&j| row[j]).collect()
    }

    /// `(label, score)` for a record.
    pub fn assess(&self, record: &Record) -> (Label, f64) {
        let x = self.project(&record.encoded());
        (self.model.predict(&x), self.model.score(&x))
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, Value> {
        self.config.hyperparameters()
    }

    fn to_document(&self) -> Document {
        let parameters = match &self.model {
            TrainedModel::Logistic(m) => serde_json::to_value(m),
            TrainedModel::NaiveBayes(m) => serde_json::to_value(m),
            TrainedModel::Forest(m) => serde_json::to_value(m),
            TrainedModel::Mlp(m) => serde_json::to_value(m),
            TrainedModel::Svm(m) => serde_json::to_value(m),
        }
        .expect("models serialize");
        Document {
            format_version: self.format_version,
            algorithm: self.algorithm(),
            features: self.features.clone(),
            hyperparameters: self.hyperparameters(),
            parameters,
            training: self.training.clone(),
            metrics_summary: self.metrics_summary,
        }
    }
}

pub fn to_bytes(artifact: &ModelArtifact) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&artifact.to_document()).expect("document serializes");
    out.push(b'\n');
    out
}

/// Writes the artifact document; returns the number of bytes written.
pub fn save_model<W: Write>(artifact: &ModelArtifact, mut sink: W) -> Result<usize, PersistError> {
    let bytes = to_bytes(artifact);
    sink.write_all(&bytes).map_err(PersistError::SinkWrite)?;
    sink.flush().map_err(PersistError::SinkWrite)?;
    Ok(bytes.len())
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn save_model_file(artifact: &ModelArtifact, path: &Path) -> Result<usize, PersistError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(PersistError::SinkWrite)?;
    let n = save_model(artifact, &mut tmp)?;
    tmp.as_file().sync_all().map_err(PersistError::SinkWrite)?;
    tmp.persist(path).map_err(|e| PersistError::SinkWrite(e.error))?;
    Ok(n)
}

pub fn load_model<R: Read>(mut source: R) -> Result<ModelArtifact, PersistError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(PersistError::SourceRead)?;
    from_bytes(&bytes)
}

pub fn load_model_file(path: &Path) -> Result<ModelArtifact, PersistError> {
    from_bytes(&fs::read(path).map_err(PersistError::SourceRead)?)
}

/// Parses and validates in stages: syntax, version, algorithm tag, schema,
/// then the fitted model's own invariants.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelArtifact, PersistError> {
    let raw: Value = serde_json::from_slice(bytes)?;
    let obj = raw
        .as_object()
        .ok_or_else(|| PersistError::schema("top level must be an object"))?;

    let version = obj
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| PersistError::schema("missing or non-integer format_version"))?;
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion { found: version });
    }
    let tag = obj
        .get("algorithm")
        .and_then(Value::as_str)
        .ok_or_else(|| PersistError::schema("missing algorithm tag"))?;
    if !Algorithm::ALL.iter().any(|a| a.tag() == tag) {
        return Err(PersistError::UnsupportedAlgorithm(tag.to_string()));
    }

    let doc: Document = serde_json::from_value(raw).map_err(|e| PersistError::schema(e.to_string()))?;
    let config = ClassifierConfig::from_hyperparameters(doc.algorithm, &doc.hyperparameters)
        .map_err(|e| PersistError::schema(format!("hyperparameters: {e}")))?;
    let model = parse_parameters(doc.algorithm, doc.parameters)?;

    if doc.features.is_empty() {
        return Err(PersistError::InvariantViolation("no input features".into()));
    }
    for (i, f) in doc.features.iter().enumerate() {
        if !FEATURE_NAMES.contains(&f.as_str()) {
            return Err(PersistError::InvariantViolation(format!("unknown feature `{f}`")));
        }
        if doc.features[..i].contains(f) {
            return Err(PersistError::InvariantViolation(format!("duplicate feature `{f}`")));
        }
    }
    model
        .check_invariants(doc.features.len())
        .map_err(PersistError::InvariantViolation)?;

    Ok(ModelArtifact {
        format_version: doc.format_version,
        config,
        features: doc.features,
        model,
        training: doc.training,
        metrics_summary: doc.metrics_summary,
    })
}

fn parse_parameters(algorithm: Algorithm, v: Value) -> Result<TrainedModel, PersistError> {
    let wrap = |e: serde_json::Error| PersistError::schema(format!("parameters: {e}"));
    Ok(match algorithm {
        Algorithm::Logistic => TrainedModel::Logistic(serde_json::from_value(v).map_err(wrap)?),
        Algorithm::NaiveBayes => TrainedModel::NaiveBayes(serde_json::from_value(v).map_err(wrap)?),
        Algorithm::Forest => TrainedModel::Forest(serde_json::from_value(v).map_err(wrap)?),
        Algorithm::Mlp => TrainedModel::Mlp(serde_json::from_value(v).map_err(wrap)?),
        Algorithm::Svm => TrainedModel::Svm(serde_json::from_value(v).map_err(wrap)?),
    })
}

/// One line of a prediction export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub ratings: [Rating; N_FEATURES],
    pub predicted: Label,
    pub score: f64,
    pub actual: Option<Label>,
}

impl PredictionRow {
    pub fn assess(artifact: &ModelArtifact, record: &Record) -> Self {
        let (predicted, score) = artifact.assess(record);
        Self {
            ratings: record.ratings,
            predicted,
            score,
            actual: record.label,
        }
    }
}

/// Writes `IR,MR,FF,CR,CO,OR,Predicted,Score[,Actual]`; the Actual column
/// appears when any row carries a label. Returns the number of data rows.
pub fn export_predictions<W: Write>(rows: &[PredictionRow], mut sink: W) -> Result<usize, PersistError> {
    if rows.is_empty() {
        return Err(PersistError::EmptyExport);
    }
    let labeled = rows.iter().any(|r| r.actual.is_some());
    let mut text = String::from("IR,MR,FF,CR,CO,OR,Predicted,Score");
    if labeled {
        text.push_str(",Actual");
    }
    text.push('\n');
    for r in rows {
        for rating in &r.ratings {
            text.push_str(rating.token());
            text.push(',');
        }
        text.push_str(&format!("{},{:.6}", r.predicted.token(), r.score));
        if labeled {
            text.push(',');
            text.push_str(r.actual.map_or("", Label::token));
        }
        text.push('\n');
    }
    sink.write_all(text.as_bytes()).map_err(PersistError::SinkWrite)?;
    Ok(rows.len())
}

/// Percentage of labeled rows predicted wrongly; `None` without labels.
pub fn error_percent(rows: &[PredictionRow]) -> Option<f64> {
    let labeled: Vec<_> = rows.iter().filter_map(|r| r.actual.map(|a| (a, r.predicted))).collect();
    if labeled.is_empty() {
        return None;
    }
    let wrong = labeled.iter().filter(|(a, p)| a != p).count();
    Some(100.0 * wrong as f64 / labeled.len() as f64)
}

//! Algorithm tags, configurations and trained models behind one interface.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::classifier::{Classifier, TrainError, Trainer};
use crate::dataset::{EncodedMatrix, Label};
use crate::forest::{fit_forest_with, ForestConfig, ForestModel};
use crate::logistic::{fit_logistic, LogisticConfig, LogisticModel};
use crate::naive_bayes::{fit_naive_bayes_matrix, NaiveBayesConfig, NaiveBayesModel};
use crate::neural::{fit_mlp, MlpConfig, MlpModel};
use crate::par::Execution;
use crate::svm::{smo_train, SvmConfig, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Logistic,
    NaiveBayes,
    Forest,
    Mlp,
    Svm,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown algorithm `{0}` (expected logistic, nb, forest, mlp or svm)")]
pub struct UnknownAlgorithm(pub String);

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Logistic,
        Algorithm::NaiveBayes,
        Algorithm::Forest,
        Algorithm::Mlp,
        Algorithm::Svm,
    ];

    /// Tag stored in model artifacts.
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Logistic => "logistic",
            Algorithm::NaiveBayes => "naive_bayes",
            Algorithm::Forest => "forest",
            Algorithm::Mlp => "mlp",
            Algorithm::Svm => "svm",
        }
    }

    /// Short name accepted on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Algorithm::NaiveBayes => "nb",
            other => other.tag(),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::Logistic => "Logistic regression",
            Algorithm::NaiveBayes => "Naive Bayes",
            Algorithm::Forest => "Random forest",
            Algorithm::Mlp => "Multilayer perceptron",
            Algorithm::Svm => "RBF SVM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == lower || a.cli_name() == lower)
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

/// Hyperparameters for one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierConfig {
    Logistic(LogisticConfig),
    NaiveBayes(NaiveBayesConfig),
    Forest(ForestConfig),
    Mlp(MlpConfig),
    Svm(SvmConfig),
}

impl ClassifierConfig {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Logistic => Self::Logistic(LogisticConfig::default()),
            Algorithm::NaiveBayes => Self::NaiveBayes(NaiveBayesConfig::default()),
            Algorithm::Forest => Self::Forest(ForestConfig::default()),
            Algorithm::Mlp => Self::Mlp(MlpConfig::default()),
            Algorithm::Svm => Self::Svm(SvmConfig::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Logistic(_) => Algorithm::Logistic,
            Self::NaiveBayes(_) => Algorithm::NaiveBayes,
            Self::Forest(_) => Algorithm::Forest,
            Self::Mlp(_) => Algorithm::Mlp,
            Self::Svm(_) => Algorithm::Svm,
        }
    }

    /// Flat name/value view of the configuration.
    pub fn hyperparameters(&self) -> BTreeMap<String, Value> {
        let v = match self {
            Self::Logistic(c) => serde_json::to_value(c),
            Self::NaiveBayes(c) => serde_json::to_value(c),
            Self::Forest(c) => serde_json::to_value(c),
            Self::Mlp(c) => serde_json::to_value(c),
            Self::Svm(c) => serde_json::to_value(c),
        };
        match v.expect("configs serialize") {
            Value::Object(map) => map.into_iter().collect(),
            _ => unreachable!("configs serialize as objects"),
        }
    }

    pub fn from_hyperparameters(
        algorithm: Algorithm,
        map: &BTreeMap<String, Value>,
    ) -> Result<Self, serde_json::Error> {
        let v = Value::Object(map.clone().into_iter().collect());
        Ok(match algorithm {
            Algorithm::Logistic => Self::Logistic(serde_json::from_value(v)?),
            Algorithm::NaiveBayes => Self::NaiveBayes(serde_json::from_value(v)?),
            Algorithm::Forest => Self::Forest(serde_json::from_value(v)?),
            Algorithm::Mlp => Self::Mlp(serde_json::from_value(v)?),
            Algorithm::Svm => Self::Svm(serde_json::from_value(v)?),
        })
    }

    /// The configuration actually used for a fit with `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        match *self {
            Self::Mlp(c) => Self::Mlp(MlpConfig { seed, ..c }),
            other => other,
        }
    }

    pub fn fit_with(
        &self,
        m: &EncodedMatrix,
        seed: u64,
        exec: Execution,
    ) -> Result<TrainedModel, TrainError> {
        Ok(match self.seeded(seed) {
            Self::Logistic(c) => TrainedModel::Logistic(fit_logistic(m, &c)?),
            Self::NaiveBayes(c) => TrainedModel::NaiveBayes(fit_naive_bayes_matrix(m, c.alpha)?),
            Self::Forest(c) => TrainedModel::Forest(fit_forest_with(m, &c, seed, exec)?),
            Self::Mlp(c) => TrainedModel::Mlp(fit_mlp(m, &c)?),
            Self::Svm(c) => TrainedModel::Svm(smo_train(m, &c)?),
        })
    }
}

impl Trainer for ClassifierConfig {
    type Model = TrainedModel;

    /// `seed` replaces any seed in the configuration. Forests grow their
    /// trees serially here; callers parallelize across folds instead.
    fn fit(&self, m: &EncodedMatrix, seed: u64) -> Result<TrainedModel, TrainError> {
        self.fit_with(m, seed, Execution::Serial)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Logistic(LogisticModel),
    NaiveBayes(NaiveBayesModel),
    Forest(ForestModel),
    Mlp(MlpModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Logistic(_) => Algorithm::Logistic,
            Self::NaiveBayes(_) => Algorithm::NaiveBayes,
            Self::Forest(_) => Algorithm::Forest,
            Self::Mlp(_) => Algorithm::Mlp,
            Self::Svm(_) => Algorithm::Svm,
        }
    }

    /// Structural and numerical consistency of the fitted parameters for
    /// inputs of width `n_features`.
    pub fn check_invariants(&self, n_features: usize) -> Result<(), String> {
        let width = |w: usize| {
            if w == n_features {
                Ok(())
            } else {
                Err(format!("model expects {w} inputs, artifact lists {n_features}"))
            }
        };
        match self {
            Self::Logistic(m) => {
                width(m.weights.len())?;
                if !m.is_finite() {
                    return Err("non-finite logistic parameter".into());
                }
                Ok(())
            }
            Self::NaiveBayes(m) => {
                width(m.n_features())?;
                m.check_invariants(1e-9)
            }
            Self::Forest(m) => m.check_invariants(n_features),
            Self::Mlp(m) => {
                width(m.n_inputs())?;
                m.check_invariants()
            }
            Self::Svm(m) => {
                if m.support_vectors.iter().any(|sv| sv.len() != n_features) {
                    return Err("support vector width differs from feature count".into());
                }
                m.check_invariants(1e-8)
            }
        }
    }
}

impl Classifier for TrainedModel {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            Self::Logistic(m) => m.score(x),
            Self::NaiveBayes(m) => m.score(x),
            Self::Forest(m) => m.score(x),
            Self::Mlp(m) => m.score(x),
            Self::Svm(m) => m.score(x),
        }
    }

    fn predict(&self, x: &[f64]) -> Label {
        match self {
            Self::Logistic(m) => m.predict(x),
            Self::NaiveBayes(m) => m.predict(x),
            Self::Forest(m) => m.predict(x),
            Self::Mlp(m) => m.predict(x),
            Self::Svm(m) => m.predict(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names() {
        assert_eq!("nb".parse::<Algorithm>().unwrap(), Algorithm::NaiveBayes);
        assert_eq!("naive_bayes".parse::<Algorithm>().unwrap(), Algorithm::NaiveBayes);
        assert_eq!("SVM".parse::<Algorithm>().unwrap(), Algorithm::Svm);
        assert!("bogus".parse::<Algorithm>().is_err());
        for a in Algorithm::ALL {
            assert_eq!(a.cli_name().parse::<Algorithm>().unwrap(), a);
        }
    }

    #[test]
    fn hyperparameters_round_trip() {
        for a in Algorithm::ALL {
            let cfg = ClassifierConfig::default_for(a);
            let map = cfg.hyperparameters();
            assert!(!map.is_empty());
            assert_eq!(ClassifierConfig::from_hyperparameters(a, &map).unwrap(), cfg);
        }
        let svm = ClassifierConfig::default_for(Algorithm::Svm).hyperparameters();
        assert!(svm.contains_key("c") && svm.contains_key("gamma"));
    }
}

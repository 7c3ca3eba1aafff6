//! Categorical naive Bayes over the six P/A/N attributes with Laplace smoothing.

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, TrainError};
use crate::dataset::{Dataset, EncodedMatrix, Label, Rating, Record, N_FEATURES};

/// Absolute slack under which two posteriors count as tied (tie goes to B).
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Indexed by class: `[p(NB), p(B)]`.
    pub priors: [f64; 2],
    /// `likelihoods[feature][class][category]`, categories ordered P, A, N.
    pub likelihoods: Vec<[[f64; 3]; 2]>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesConfig {
    /// Laplace pseudo-count added to every category.
    pub alpha: f64,
}

impl Default for NaiveBayesConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Normalized posterior over the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub non_bankrupt: f64,
    pub bankrupt: f64,
}

impl Posterior {
    pub fn label(&self) -> Label {
        if self.bankrupt >= self.non_bankrupt - TIE_EPS {
            Label::Bankrupt
        } else {
            Label::NonBankrupt
        }
    }
}

pub fn fit_naive_bayes(dataset: &Dataset, alpha: f64) -> Result<NaiveBayesModel, TrainError> {
    let rows = dataset
        .records
        .iter()
        .map(|r| {
            let label = r
                .label
                .ok_or_else(|| TrainError::InvalidConfig("training record without label".into()))?;
            Ok((r.ratings.iter().map(|x| x.index()).collect(), label))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    fit_categorical(&rows, N_FEATURES, alpha)
}

/// Fit from an encoded matrix (any number of columns) whose values lie on
/// the rating grid.
pub fn fit_naive_bayes_matrix(m: &EncodedMatrix, alpha: f64) -> Result<NaiveBayesModel, TrainError> {
    let rows = (0..m.n_rows())
        .map(|i| {
            let cats = m
                .row(i)
                .iter()
                .map(|&v| Rating::decode(v).map(|r| r.index()))
                .collect::<Option<Vec<_>>>()
                .ok_or(TrainError::NotOnRatingGrid)?;
            Ok((cats, m.label(i)))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    fit_categorical(&rows, m.n_features(), alpha)
}

fn fit_categorical(
    rows: &[(Vec<usize>, Label)],
    n_features: usize,
    alpha: f64,
) -> Result<NaiveBayesModel, TrainError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(TrainError::InvalidConfig(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    if rows.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut class_counts = [0usize; 2];
    let mut counts = vec![[[0usize; 3]; 2]; n_features];
    for (cats, label) in rows {
        let c = label.index();
        class_counts[c] += 1;
        for (f, &v) in cats.iter().enumerate() {
            counts[f][c][v] += 1;
        }
    }
    if class_counts[0] == 0 || class_counts[1] == 0 {
        return Err(TrainError::SingleClassTraining);
    }
    let n = rows.len() as f64;
    let priors = [class_counts[0] as f64 / n, class_counts[1] as f64 / n];
    let likelihoods = counts
        .iter()
        .map(|per_class| {
            let mut out = [[0.0; 3]; 2];
            for c in 0..2 {
                let denom = class_counts[c] as f64 + 3.0 * alpha;
                for v in 0..3 {
                    out[c][v] = (per_class[c][v] as f64 + alpha) / denom;
                }
            }
            out
        })
        .collect();
    Ok(NaiveBayesModel {
        priors,
        likelihoods,
        alpha,
    })
}

/// Posterior computed in log space and normalized.
pub fn predict_naive_bayes(model: &NaiveBayesModel, record: &Record) -> Posterior {
    let cats: Vec<usize> = record.ratings.iter().map(|r| r.index()).collect();
    posterior_from_categories(model, &cats)
}

fn posterior_from_categories(model: &NaiveBayesModel, cats: &[usize]) -> Posterior {
    let mut log_joint = [0.0f64; 2];
    for (c, lj) in log_joint.iter_mut().enumerate() {
        *lj = model.priors[c].ln()
            + cats
                .iter()
                .zip(&model.likelihoods)
                .map(|(&v, table)| table[c][v].ln())
                .sum::<f64>();
    }
    let hi = log_joint[0].max(log_joint[1]);
    if hi == f64::NEG_INFINITY {
        // Both joints are zero (possible only with alpha = 0).
        return Posterior {
            non_bankrupt: 0.5,
            bankrupt: 0.5,
        };
    }
    let e0 = (log_joint[0] - hi).exp();
    let e1 = (log_joint[1] - hi).exp();
    let z = e0 + e1;
    Posterior {
        non_bankrupt: e0 / z,
        bankrupt: e1 / z,
    }
}

/// Nearest grid category for an encoded value.
fn nearest_rating(v: f64) -> Rating {
    if v >= 0.75 {
        Rating::Positive
    } else if v >= 0.25 {
        Rating::Average
    } else {
        Rating::Negative
    }
}

impl NaiveBayesModel {
    pub fn n_features(&self) -> usize {
        self.likelihoods.len()
    }

    pub fn posterior_encoded(&self, x: &[f64]) -> Posterior {
        let cats: Vec<usize> = x.iter().map(|&v| nearest_rating(v).index()).collect();
        posterior_from_categories(self, &cats)
    }

    /// Checks priors and per-(feature, class) likelihood rows sum to one.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        if self.likelihoods.is_empty() {
            return Err("no likelihood tables".into());
        }
        let all = self
            .priors
            .iter()
            .chain(self.likelihoods.iter().flatten().flatten());
        if all.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("probability outside [0, 1]".into());
        }
        if ((self.priors[0] + self.priors[1]) - 1.0).abs() > tol {
            return Err(format!(
                "priors sum to {}",
                self.priors[0] + self.priors[1]
            ));
        }
        for (f, table) in self.likelihoods.iter().enumerate() {
            for (c, row) in table.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > tol {
                    return Err(format!("likelihoods for feature {f} class {c} sum to {s}"));
                }
            }
        }
        Ok(())
    }
}

impl Classifier for NaiveBayesModel {
    fn score(&self, x: &[f64]) -> f64 {
        self.posterior_encoded(x).bankrupt
    }

    fn predict(&self, x: &[f64]) -> Label {
        self.posterior_encoded(x).label()
    }
}

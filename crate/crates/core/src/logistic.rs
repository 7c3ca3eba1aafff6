//! L2-regularized logistic regression fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::classifier::{require_both_classes, threshold_label, Classifier, TrainError};
use crate::dataset::{EncodedMatrix, Label};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            l2_lambda: 1e-4,
            max_iters: 5000,
            tolerance: 1e-6,
        }
    }
}

impl LogisticConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "l2_lambda must be non-negative, got {}",
                self.l2_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LogisticConfig,
    /// Gradient steps actually taken.
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Probability of Bankrupt.
pub fn predict_logistic(model: &LogisticModel, x: &[f64]) -> f64 {
    sigmoid(model.linear(x))
}

impl Classifier for LogisticModel {
    fn score(&self, x: &[f64]) -> f64 {
        predict_logistic(self, x)
    }

    fn predict(&self, x: &[f64]) -> Label {
        threshold_label(self.score(x), 0.5)
    }
}

/// Mean negative log-likelihood plus `lambda / 2 * |w|^2` (bias unpenalized).
pub fn logistic_loss(weights: &[f64], bias: f64, m: &EncodedMatrix, lambda: f64) -> f64 {
    let n = m.n_rows() as f64;
    let nll: f64 = m
        .rows()
        .zip(m.y())
        .map(|(x, &y)| {
            let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            softplus(z) - y * z
        })
        .sum::<f64>()
        / n;
    nll + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`] as (d/dweights, d/dbias).
pub fn logistic_gradient(
    weights: &[f64],
    bias: f64,
    m: &EncodedMatrix,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = m.n_rows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in m.rows().zip(m.y()) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let r = sigmoid(z) - y;
        gb += r;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (gw, gb / n)
}

pub fn fit_logistic(m: &EncodedMatrix, cfg: &LogisticConfig) -> Result<LogisticModel, TrainError> {
    fit_logistic_traced(m, cfg).map(|(model, _)| model)
}

/// Like [`fit_logistic`], also returning the loss before each step and after the last.
pub fn fit_logistic_traced(
    m: &EncodedMatrix,
    cfg: &LogisticConfig,
) -> Result<(LogisticModel, Vec<f64>), TrainError> {
    cfg.validate()?;
    require_both_classes(m)?;
    let mut weights = vec![0.0; m.n_features()];
    let mut bias = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let loss = logistic_loss(&weights, bias, m, cfg.l2_lambda);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: iterations,
            });
        }
        trace.push(loss);
        let (gw, gb) = logistic_gradient(&weights, bias, m, cfg.l2_lambda);
        let max_grad = gw.iter().fold(gb.abs(), |acc, g| acc.max(g.abs()));
        if max_grad < cfg.tolerance {
            converged = true;
            break;
        }
        if iterations == cfg.max_iters {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * gb;
        iterations += 1;
    }

    let model = LogisticModel {
        weights,
        bias,
        config: *cfg,
        iterations,
        converged,
    };
    if !model.is_finite() {
        return Err(TrainError::NonFiniteLoss { iteration: iterations });
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EncodedMatrix {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..10 {
            rows.push(vec![0.0]);
            y.push(0.0);
            rows.push(vec![1.0]);
            y.push(1.0);
        }
        EncodedMatrix::from_rows(&rows, y, vec!["x".into()])
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-12);
        for z in -5..=5 {
            let z = z as f64;
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
        assert!(sigmoid(1e3).is_finite() && sigmoid(-1e3) >= 0.0);
        assert_eq!(sigmoid(1e3), 1.0);
    }

    #[test]
    fn separable_toy_crosses_half() {
        let model = fit_logistic(&toy(), &LogisticConfig::default()).unwrap();
        assert!(predict_logistic(&model, &[0.0]) < 0.5);
        assert!(predict_logistic(&model, &[1.0]) > 0.9);
        assert_eq!(model.predict(&[1.0]), Label::Bankrupt);
    }

    #[test]
    fn zero_model_predicts_half_and_ties_to_bankrupt() {
        let model = LogisticModel {
            weights: vec![0.0; 6],
            bias: 0.0,
            config: LogisticConfig::default(),
            iterations: 0,
            converged: false,
        };
        assert_eq!(predict_logistic(&model, &[1.0, 0.5, 0.0, 1.0, 1.0, 0.0]), 0.5);
        assert_eq!(model.predict(&[0.0; 6]), Label::Bankrupt);
    }

    #[test]
    fn heavy_regularization_shrinks_to_prior() {
        // 3 positives out of 8, feature informative.
        let rows: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let y = vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let m = EncodedMatrix::from_rows(&rows, y, vec!["x".into()]);
        let free = fit_logistic(&m, &LogisticConfig::default()).unwrap();
        let cfg = LogisticConfig {
            l2_lambda: 1e6,
            learning_rate: 1e-6,
            max_iters: 2000,
            tolerance: 1e-12,
        };
        let model = fit_logistic(&m, &cfg).unwrap();
        assert!(model.weights[0].abs() < 1e-5);
        assert!(free.weights[0] > 1.0);
        // Feature no longer moves the prediction; the free fit separates.
        let spread = predict_logistic(&model, &[1.0]) - predict_logistic(&model, &[0.0]);
        assert!(spread.abs() < 1e-5);
        let prior = 3.0 / 8.0;
        assert!(
            (predict_logistic(&model, &[1.0]) - prior).abs()
                < (predict_logistic(&free, &[1.0]) - prior).abs()
        );
    }

    #[test]
    fn single_class_and_divergence_errors() {
        let m = EncodedMatrix::from_rows(&[vec![0.0], vec![1.0]], vec![1.0, 1.0], vec!["x".into()]);
        assert_eq!(
            fit_logistic(&m, &LogisticConfig::default()),
            Err(TrainError::SingleClassTraining)
        );
        let cfg = LogisticConfig {
            learning_rate: 1e308,
            ..Default::default()
        };
        assert!(matches!(
            fit_logistic(&toy(), &cfg),
            Err(TrainError::NonFiniteLoss { .. })
        ));
    }
}

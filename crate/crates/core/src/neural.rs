//! One-hidden-layer perceptron (sigmoid units, cross-entropy loss) trained by
//! full-batch backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{require_both_classes, threshold_label, Classifier, TrainError};
use crate::dataset::{EncodedMatrix, Label};
use crate::logistic::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 4,
            learning_rate: 0.5,
            epochs: 2000,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `hidden x inputs`.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub config: MlpConfig,
}

/// Gradient with the same layout as [`MlpModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpGradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            w1: vec![vec![0.0; model.n_inputs()]; model.hidden()],
            b1: vec![0.0; model.hidden()],
            w2: vec![0.0; model.hidden()],
            b2: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.w1
            .iter()
            .flatten()
            .chain(&self.b1)
            .chain(&self.w2)
            .fold(self.b2.abs(), |acc, g| acc.max(g.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.w1
            .iter()
            .flatten()
            .chain(&self.b1)
            .chain(&self.w2)
            .fold(self.b2 * self.b2, |acc, g| acc + g * g)
            .sqrt()
    }
}

impl MlpModel {
    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.first().map_or(0, Vec::len)
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite()
            && self
                .w1
                .iter()
                .flatten()
                .chain(&self.b1)
                .chain(&self.w2)
                .all(|v| v.is_finite())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| sigmoid(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()))
            .collect()
    }

    fn output_logit(&self, h: &[f64]) -> f64 {
        self.b2 + self.w2.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.hidden() == 0 {
            return Err("hidden layer is empty".into());
        }
        if self.w1.len() != self.hidden() || self.w2.len() != self.hidden() {
            return Err("layer sizes disagree".into());
        }
        if self.w1.iter().any(|r| r.len() != self.n_inputs()) {
            return Err("ragged input weights".into());
        }
        if !self.is_finite() {
            return Err("non-finite parameter".into());
        }
        Ok(())
    }
}

/// Random initial parameters for `n_inputs` inputs.
pub fn init_mlp(n_inputs: usize, cfg: &MlpConfig) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.init_scale;
    let mut draw = || if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
    let w1 = (0..cfg.hidden)
        .map(|_| (0..n_inputs).map(|_| draw()).collect())
        .collect();
    let b1 = (0..cfg.hidden).map(|_| draw()).collect();
    let w2 = (0..cfg.hidden).map(|_| draw()).collect();
    let b2 = draw();
    MlpModel {
        w1,
        b1,
        w2,
        b2,
        config: *cfg,
    }
}

/// Probability of Bankrupt.
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> f64 {
    sigmoid(model.output_logit(&model.hidden_activations(x)))
}

/// Mean binary cross-entropy over the batch.
pub fn mlp_loss(model: &MlpModel, batch: &EncodedMatrix) -> f64 {
    let n = batch.n_rows() as f64;
    batch
        .rows()
        .zip(batch.y())
        .map(|(x, &y)| {
            let z = model.output_logit(&model.hidden_activations(x));
            // softplus(z) - y z, stable for large |z|
            z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
        })
        .sum::<f64>()
        / n
}

/// Exact gradient of [`mlp_loss`] by backpropagation.
pub fn mlp_gradients(model: &MlpModel, batch: &EncodedMatrix) -> MlpGradients {
    let mut g = MlpGradients::zeros_like(model);
    for (x, &y) in batch.rows().zip(batch.y()) {
        let h = model.hidden_activations(x);
        let dz = sigmoid(model.output_logit(&h)) - y;
        g.b2 += dz;
        for j in 0..h.len() {
            g.w2[j] += dz * h[j];
            let dh = dz * model.w2[j] * h[j] * (1.0 - h[j]);
            g.b1[j] += dh;
            for (gw, v) in g.w1[j].iter_mut().zip(x) {
                *gw += dh * v;
            }
        }
    }
    let n = batch.n_rows() as f64;
    g.w1.iter_mut().flatten().for_each(|v| *v /= n);
    g.b1.iter_mut().for_each(|v| *v /= n);
    g.w2.iter_mut().for_each(|v| *v /= n);
    g.b2 /= n;
    g
}

fn apply_step(model: &mut MlpModel, g: &MlpGradients, lr: f64) {
    for (row, grow) in model.w1.iter_mut().zip(&g.w1) {
        for (w, d) in row.iter_mut().zip(grow) {
            *w -= lr * d;
        }
    }
    for (b, d) in model.b1.iter_mut().zip(&g.b1) {
        *b -= lr * d;
    }
    for (w, d) in model.w2.iter_mut().zip(&g.w2) {
        *w -= lr * d;
    }
    model.b2 -= lr * g.b2;
}

pub fn fit_mlp(m: &EncodedMatrix, cfg: &MlpConfig) -> Result<MlpModel, TrainError> {
    fit_mlp_traced(m, cfg).map(|(model, _)| model)
}

/// Like [`fit_mlp`], also returning the loss before each epoch and after the last.
pub fn fit_mlp_traced(m: &EncodedMatrix, cfg: &MlpConfig) -> Result<(MlpModel, Vec<f64>), TrainError> {
    if cfg.hidden == 0 {
        return Err(TrainError::InvalidConfig("hidden must be at least 1".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(TrainError::InvalidConfig(format!(
            "learning_rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if !(cfg.init_scale >= 0.0 && cfg.init_scale.is_finite()) {
        return Err(TrainError::InvalidConfig("init_scale must be non-negative".into()));
    }
    require_both_classes(m)?;

    let mut model = init_mlp(m.n_features(), cfg);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let loss = mlp_loss(&model, m);
        if !loss.is_finite() || !model.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration: epoch });
        }
        trace.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        let g = mlp_gradients(&model, m);
        apply_step(&mut model, &g, cfg.learning_rate);
    }
    Ok((model, trace))
}

impl Classifier for MlpModel {
    fn score(&self, x: &[f64]) -> f64 {
        mlp_forward(self, x)
    }

    fn predict(&self, x: &[f64]) -> Label {
        threshold_label(self.score(x), 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(hidden: usize, inputs: usize) -> MlpModel {
        init_mlp(
            inputs,
            &MlpConfig {
                hidden,
                init_scale: 0.0,
                ..Default::default()
            },
        )
    }

    #[test]
    fn zero_parameters_give_half() {
        let m = zero_model(4, 6);
        assert_eq!(mlp_forward(&m, &[1.0, 0.5, 0.0, 1.0, 0.0, 0.5]), 0.5);
    }

    #[test]
    fn output_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in 0..1000u64 {
            let m = init_mlp(
                6,
                &MlpConfig {
                    seed: s,
                    init_scale: 5.0,
                    ..Default::default()
                },
            );
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..=1.0)).collect();
            let p = mlp_forward(&m, &x);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn saturated_hidden_unit() {
        let mut m = zero_model(1, 6);
        m.b1[0] = 50.0;
        m.w2[0] = 1.7;
        assert!((mlp_forward(&m, &[0.3; 6]) - sigmoid(1.7)).abs() < 1e-6);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = EncodedMatrix::from_rows(&rows, vec![0.0, 1.0], vec!["a".into(), "b".into()]);
        let cfg = MlpConfig {
            epochs: 0,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(fit_mlp(&m, &cfg).unwrap(), init_mlp(2, &cfg));
    }

    #[test]
    fn near_perfect_prediction_has_tiny_gradient() {
        let rows = vec![vec![0.0], vec![1.0]];
        let batch = EncodedMatrix::from_rows(&rows, vec![0.0, 1.0], vec!["x".into()]);
        let mut m = zero_model(1, 1);
        // h = sigmoid(200 x - 100) is a step; output saturates both ways.
        m.w1[0][0] = 200.0;
        m.b1[0] = -100.0;
        m.w2[0] = 80.0;
        m.b2 = -40.0;
        assert!(mlp_gradients(&m, &batch).norm() < 1e-6);
    }

    #[test]
    fn invalid_configs() {
        let rows = vec![vec![0.0], vec![1.0]];
        let m = EncodedMatrix::from_rows(&rows, vec![0.0, 1.0], vec!["x".into()]);
        let bad = MlpConfig {
            hidden: 0,
            ..Default::default()
        };
        assert!(matches!(fit_mlp(&m, &bad), Err(TrainError::InvalidConfig(_))));
    }
}

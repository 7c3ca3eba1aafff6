//! RBF-kernel soft-margin SVM trained by sequential minimal optimization.
//!
//! The dual is solved in minimization form
//!
//! ```text
//! min f(a) = 1/2 a'Qa - e'a,  Q_ij = y_i y_j K(x_i, x_j)
//! s.t. 0 <= a_i <= C,  y'a = 0
//! ```
//!
//! Each iteration picks the maximal violating pair (i from the "up" set with
//! the largest `-y_i G_i`, j from the "low" set with the smallest) and solves
//! the two-variable subproblem analytically, clipping to the box. The solver
//! stops once the violation gap falls below `tol`, which bounds every KKT
//! residual `y_i f(x_i) - 1` by `tol` once the bias sits inside the gap.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{require_both_classes, threshold_label, Classifier, TrainError};
use crate::dataset::{EncodedMatrix, Label};
use crate::evaluation::{k_fold_cv, stratified_folds, EvalError};
use crate::par::{map_indexed, Execution};

/// Curvature floor for degenerate pairs (identical points).
const TAU: f64 = 1e-12;

pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
}

/// `exp(-gamma * |x - z|^2)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64, KernelError> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(KernelError::NegativeGamma(gamma));
    }
    Ok(rbf(x, z, gamma))
}

fn rbf(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Hard cap on pair updates.
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: 1.0 / 6.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvmConfig {
    pub fn with(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.tol > 0.0) {
            return Err(TrainError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// Multipliers in (0, C], parallel to `support_vectors`.
    pub alphas: Vec<f64>,
    /// +1 for Bankrupt, -1 for NonBankrupt.
    pub sv_targets: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// False when the iteration cap was hit before the KKT gap closed.
    pub converged: bool,
    pub iterations: usize,
}

impl SvmModel {
    /// |sum alpha_i y_i| over the stored support vectors.
    pub fn equality_residual(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.sv_targets)
            .map(|(a, y)| a * y)
            .sum::<f64>()
            .abs()
    }

    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        let n = self.support_vectors.len();
        if self.alphas.len() != n || self.sv_targets.len() != n {
            return Err("support vector arrays differ in length".into());
        }
        if !(self.c > 0.0) || !(self.gamma >= 0.0) || !self.bias.is_finite() {
            return Err("invalid c, gamma or bias".into());
        }
        for (&a, &y) in self.alphas.iter().zip(&self.sv_targets) {
            if !(a > 0.0 && a <= self.c * (1.0 + 1e-12)) {
                return Err(format!("alpha {a} outside (0, {}]", self.c));
            }
            if y != 1.0 && y != -1.0 {
                return Err(format!("target {y} is not +1/-1"));
            }
        }
        let r = self.equality_residual();
        if r > tol {
            return Err(format!("sum alpha*y = {r} exceeds {tol}"));
        }
        Ok(())
    }
}

/// Full dual solution over all training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub targets: Vec<f64>,
    pub bias: f64,
    /// Dual objective in maximization form: `sum a - 1/2 a'Qa`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final violation gap `m(a) - M(a)`.
    pub gap: f64,
}

/// Optional per-update diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoTrace {
    /// Dual objective (maximization form) after every accepted pair update.
    pub objectives: Vec<f64>,
    /// Largest |sum a_i y_i| seen after any update.
    pub max_equality_residual: f64,
}

fn targets_of(m: &EncodedMatrix) -> Vec<f64> {
    (0..m.n_rows())
        .map(|i| if m.label(i).is_bankrupt() { 1.0 } else { -1.0 })
        .collect()
}

fn dual_objective(alphas: &[f64], grad: &[f64]) -> f64 {
    // f = 1/2 sum a_i (G_i - 1); the maximization objective is -f.
    -0.5 * alphas
        .iter()
        .zip(grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
}

/// Solve the dual. `trace`, when given, records objective and equality drift.
pub fn smo_solve(
    m: &EncodedMatrix,
    cfg: &SvmConfig,
    mut trace: Option<&mut SmoTrace>,
) -> Result<SmoSolution, TrainError> {
    cfg.validate()?;
    require_both_classes(m)?;
    let n = m.n_rows();
    let y = targets_of(m);
    let c = cfg.c;

    let kernel: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf(m.row(i), m.row(j), cfg.gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;

    loop {
        // Working-set selection; strict comparisons keep the lowest index on ties.
        let mut i_sel = None;
        let mut g_max = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > g_max {
                g_max = v;
                i_sel = Some(t);
            }
            if low && v < g_min {
                g_min = v;
                j_sel = Some(t);
            }
        }
        gap = g_max - g_min;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            converged = true;
            break;
        };
        if gap < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
        iterations += 1;

        let residual = alpha.iter().zip(&y).map(|(a, t)| a * t).sum::<f64>().abs();
        debug_assert!(residual <= 1e-8, "equality constraint drifted to {residual}");
        if let Some(tr) = trace.as_deref_mut() {
            tr.objectives.push(dual_objective(&alpha, &grad));
            tr.max_equality_residual = tr.max_equality_residual.max(residual);
        }
    }

    let bias = compute_bias(&alpha, &grad, &y, c);
    Ok(SmoSolution {
        objective: dual_objective(&alpha, &grad),
        alphas: alpha,
        targets: y,
        bias,
        iterations,
        converged,
        gap,
    })
}

/// Average `-y_i G_i` over free vectors; midpoint of the feasible interval otherwise.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    -rho
}

pub fn smo_train(m: &EncodedMatrix, cfg: &SvmConfig) -> Result<SvmModel, TrainError> {
    let sol = smo_solve(m, cfg, None)?;
    Ok(model_from_solution(m, cfg, &sol))
}

pub fn model_from_solution(m: &EncodedMatrix, cfg: &SvmConfig, sol: &SmoSolution) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut sv_targets = Vec::new();
    for (i, &a) in sol.alphas.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(m.row(i).to_vec());
            alphas.push(a);
            sv_targets.push(sol.targets[i]);
        }
    }
    SvmModel {
        support_vectors,
        alphas,
        sv_targets,
        bias: sol.bias,
        gamma: cfg.gamma,
        c: cfg.c,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

/// `sum alpha_i y_i K(sv_i, x) + b`.
pub fn decision_value(model: &SvmModel, x: &[f64]) -> f64 {
    model
        .support_vectors
        .iter()
        .zip(model.alphas.iter().zip(&model.sv_targets))
        .map(|(sv, (a, y))| a * y * rbf(sv, x, model.gamma))
        .sum::<f64>()
        + model.bias
}

/// B iff the decision value is non-negative.
pub fn predict_svm(model: &SvmModel, x: &[f64]) -> Label {
    threshold_label(decision_value(model, x), 0.0)
}

impl Classifier for SvmModel {
    fn score(&self, x: &[f64]) -> f64 {
        decision_value(self, x)
    }

    fn predict(&self, x: &[f64]) -> Label {
        predict_svm(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub mean_accuracy: f64,
    /// Set when training failed in some fold; accuracy is then 0.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub best_accuracy: f64,
    pub table: Vec<GridCell>,
}

/// Stratified k-fold CV accuracy for every (c, gamma) cell. All cells share
/// the fold assignment derived from `seed`. Ties prefer smaller c, then smaller gamma.
pub fn grid_search(
    m: &EncodedMatrix,
    c_grid: &[f64],
    gamma_grid: &[f64],
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<GridSearchResult, EvalError> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    // Fail fast on fold problems before spawning cells.
    stratified_folds(&labels_of(m), k, seed)?;

    let cells: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| gamma_grid.iter().map(move |&g| (c, g)))
        .collect();
    let table: Vec<GridCell> = map_indexed(cells.len(), exec, |idx| {
        let (c, gamma) = cells[idx];
        let trainer = SvmTrainer(SvmConfig::with(c, gamma));
        match k_fold_cv(m, &trainer, k, seed, Execution::Serial) {
            Ok(cv) => GridCell {
                c,
                gamma,
                mean_accuracy: cv.mean.accuracy,
                error: None,
            },
            Err(e) => GridCell {
                c,
                gamma,
                mean_accuracy: 0.0,
                error: Some(e.to_string()),
            },
        }
    });

    let best = table
        .iter()
        .fold(None::<&GridCell>, |best, cell| match best {
            None => Some(cell),
            Some(b) => {
                let better = cell.mean_accuracy > b.mean_accuracy
                    || (cell.mean_accuracy == b.mean_accuracy
                        && (cell.c < b.c || (cell.c == b.c && cell.gamma < b.gamma)));
                Some(if better { cell } else { b })
            }
        })
        .expect("non-empty grid");
    Ok(GridSearchResult {
        best_c: best.c,
        best_gamma: best.gamma,
        best_accuracy: best.mean_accuracy,
        table,
    })
}

fn labels_of(m: &EncodedMatrix) -> Vec<Label> {
    (0..m.n_rows()).map(|i| m.label(i)).collect()
}

/// `c,gamma,mean_accuracy` rows for plotting.
pub fn write_grid_csv<W: Write>(result: &GridSearchResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "c,gamma,mean_accuracy")?;
    for cell in &result.table {
        writeln!(out, "{},{},{:.6}", cell.c, cell.gamma, cell.mean_accuracy)?;
    }
    Ok(())
}

/// Adapts an [`SvmConfig`] to the [`crate::classifier::Trainer`] interface.
#[derive(Debug, Clone, Copy)]
pub struct SvmTrainer(pub SvmConfig);

impl crate::classifier::Trainer for SvmTrainer {
    type Model = SvmModel;

    fn fit(&self, m: &EncodedMatrix, _seed: u64) -> Result<SvmModel, TrainError> {
        smo_train(m, &self.0)
    }
}

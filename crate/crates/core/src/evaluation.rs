//! Stratified splitting, k-fold cross-validation, confusion metrics and ROC.
//!
//! Bankrupt is the positive class throughout.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, TrainError, Trainer};
use crate::dataset::{Dataset, DatasetError, EncodedMatrix, Label};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("both classes are required")]
    SingleClassInput,
    #[error("class {0} has no members")]
    EmptyClass(Label),
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("cannot form {k} folds: {n_nb} NB and {n_b} B records")]
    InsufficientClassMembers { k: usize, n_nb: usize, n_b: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("fold {fold}: {source}")]
    Training {
        fold: usize,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Bankrupt, Label::Bankrupt) => cm.tp += 1,
            (Label::NonBankrupt, Label::Bankrupt) => cm.fp += 1,
            (Label::Bankrupt, Label::NonBankrupt) => cm.fn_ += 1,
            (Label::NonBankrupt, Label::NonBankrupt) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Ratios from a confusion matrix; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()).unwrap_or(0.0),
        tpr: ratio(cm.tp, cm.tp + cm.fn_),
        fpr: ratio(cm.fp, cm.fp + cm.tn),
        precision: ratio(cm.tp, cm.tp + cm.fp),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (fpr, tpr) from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores, highest first; tied scores form one step.
pub fn roc(y_true: &[Label], scores: &[f64]) -> Result<RocCurve, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    let pos = y_true.iter().filter(|l| l.is_bankrupt()).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if y_true[order[k]].is_bankrupt() {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Two-column `fpr,tpr` text.
pub fn write_roc_csv<W: Write>(curve: &RocCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "fpr,tpr")?;
    for (x, y) in &curve.points {
        writeln!(out, "{x:.6},{y:.6}")?;
    }
    Ok(())
}

fn class_indices(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    by_class
}

/// Per-class shuffled train/test index split; each class contributes
/// `round(fraction * n_class)` rows to train.
pub fn stratified_split_indices(
    labels: &[Label],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in class_indices(labels).into_iter().enumerate() {
        if idx.is_empty() {
            let label = if class == 1 { Label::Bankrupt } else { Label::NonBankrupt };
            return Err(EvalError::EmptyClass(label));
        }
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), EvalError> {
    let labels = d
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| r.label.ok_or(DatasetError::MissingLabel(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let (train, test) = stratified_split_indices(&labels, train_fraction, seed)?;
    Ok((d.subset(&train)?, d.subset(&test)?))
}

/// Fold id for every row. Each class is shuffled, the classes are laid end to
/// end (NB first) and rows are dealt round-robin, so fold sizes differ by at
/// most one and class proportions are preserved.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let [mut nb, mut b] = class_indices(labels);
    if nb.is_empty() || b.is_empty() || labels.len() < k {
        return Err(EvalError::InsufficientClassMembers {
            k,
            n_nb: nb.len(),
            n_b: b.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nb.shuffle(&mut rng);
    b.shuffle(&mut rng);
    let mut fold = vec![0; labels.len()];
    for (pos, &i) in nb.iter().chain(&b).enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub seed: u64,
    pub per_fold: Vec<Metrics>,
    pub per_fold_confusion: Vec<ConfusionMatrix>,
    /// Arithmetic mean of the defined per-fold values.
    pub mean: Metrics,
    /// Sample standard deviation of the defined per-fold values.
    pub std: Metrics,
    /// Sum of the per-fold confusion matrices.
    pub pooled: ConfusionMatrix,
    /// Held-out score and true label of every evaluated row, in row order.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl CvResult {
    pub fn roc(&self) -> Result<RocCurve, EvalError> {
        roc(&self.labels, &self.scores)
    }
}

fn mean_std(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

fn aggregate(
    k: usize,
    seed: u64,
    confusions: Vec<ConfusionMatrix>,
    scored: Vec<(usize, f64, Label)>,
) -> CvResult {
    let per_fold: Vec<Metrics> = confusions.iter().map(metrics).collect();
    let (acc_m, acc_s) = mean_std(per_fold.iter().map(|m| Some(m.accuracy)));
    let (tpr_m, tpr_s) = mean_std(per_fold.iter().map(|m| m.tpr));
    let (fpr_m, fpr_s) = mean_std(per_fold.iter().map(|m| m.fpr));
    let (pre_m, pre_s) = mean_std(per_fold.iter().map(|m| m.precision));
    let mut pooled = ConfusionMatrix::default();
    confusions.iter().for_each(|c| pooled.add(c));
    let mut scored = scored;
    scored.sort_by_key(|s| s.0);
    CvResult {
        k,
        seed,
        per_fold,
        per_fold_confusion: confusions,
        mean: Metrics {
            accuracy: acc_m.unwrap_or(0.0),
            tpr: tpr_m,
            fpr: fpr_m,
            precision: pre_m,
        },
        std: Metrics {
            accuracy: acc_s.unwrap_or(0.0),
            tpr: tpr_s,
            fpr: fpr_s,
            precision: pre_s,
        },
        pooled,
        scores: scored.iter().map(|s| s.1).collect(),
        labels: scored.iter().map(|s| s.2).collect(),
    }
}

fn evaluate_rows<C: Classifier>(
    model: &C,
    m: &EncodedMatrix,
    rows: &[usize],
) -> (ConfusionMatrix, Vec<(usize, f64, Label)>) {
    let truth: Vec<Label> = rows.iter().map(|&i| m.label(i)).collect();
    let pred: Vec<Label> = rows.iter().map(|&i| model.predict(m.row(i))).collect();
    let cm = confusion(&truth, &pred).expect("non-empty fold");
    let scored = rows
        .iter()
        .map(|&i| (i, model.score(m.row(i)), m.label(i)))
        .collect();
    (cm, scored)
}

/// Stratified k-fold cross-validation over the whole matrix. Fold `f` is
/// trained with seed `seed + f`.
pub fn k_fold_cv<T: Trainer>(
    m: &EncodedMatrix,
    trainer: &T,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<CvResult, EvalError> {
    let labels: Vec<Label> = (0..m.n_rows()).map(|i| m.label(i)).collect();
    let fold = stratified_folds(&labels, k, seed)?;

    let outcomes = map_indexed(k, exec, |f| {
        let train: Vec<usize> = (0..m.n_rows()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..m.n_rows()).filter(|&i| fold[i] == f).collect();
        let model = trainer
            .fit(&m.select_rows(&train), seed.wrapping_add(f as u64))
            .map_err(|source| EvalError::Training { fold: f, source })?;
        Ok::<_, EvalError>(evaluate_rows(&model, m, &test))
    });

    let mut confusions = Vec::with_capacity(k);
    let mut scored = Vec::with_capacity(m.n_rows());
    for outcome in outcomes {
        let (cm, s) = outcome?;
        confusions.push(cm);
        scored.extend(s);
    }
    Ok(aggregate(k, seed, confusions, scored))
}

/// One model fitted on a stratified train split, scored on k stratified
/// subsamples of the held-out part.
pub fn heldout_cv<T: Trainer>(
    m: &EncodedMatrix,
    trainer: &T,
    train_fraction: f64,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<CvResult, EvalError> {
    let labels: Vec<Label> = (0..m.n_rows()).map(|i| m.label(i)).collect();
    let (train, test) = stratified_split_indices(&labels, train_fraction, seed)?;
    let test_labels: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
    let fold = stratified_folds(&test_labels, k, seed)?;
    let model = trainer
        .fit(&m.select_rows(&train), seed)
        .map_err(|source| EvalError::Training { fold: 0, source })?;

    let outcomes = map_indexed(k, exec, |f| {
        let rows: Vec<usize> = test
            .iter()
            .zip(&fold)
            .filter(|(_, &fi)| fi == f)
            .map(|(&i, _)| i)
            .collect();
        evaluate_rows(&model, m, &rows)
    });
    let (confusions, scored): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(aggregate(k, seed, confusions, scored.into_iter().flatten().collect()))
}

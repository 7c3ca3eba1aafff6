//! Redundancy filtering by pairwise Pearson correlation and information-gain ranking.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::dataset::EncodedMatrix;

/// Redundancy threshold on |r| between two kept features.
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("feature index {index} out of range for {n_features} features")]
    IndexOutOfBounds { index: usize, n_features: usize },
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FeatureError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub feature_names: Vec<String>,
    /// Correlation of each feature with the 0/1 label; 0 where undefined.
    pub feature_class_corr: Vec<f64>,
    /// Symmetric; entries involving a constant feature are 0.
    pub feature_feature_corr: Vec<Vec<f64>>,
    /// Set for features whose correlation is undefined (constant column or constant label).
    pub zero_variance: Vec<bool>,
    /// Kept features in the order they were accepted.
    pub kept: Vec<usize>,
    /// (dropped feature, kept feature it was redundant with).
    pub dropped: Vec<(usize, usize)>,
    pub threshold: f64,
}

impl CorrelationReport {
    pub fn is_kept(&self, feature: usize) -> bool {
        self.kept.contains(&feature)
    }
}

/// Greedy redundancy filter. Features are visited by descending |class
/// correlation| (ties by column order); a feature is dropped when its |r|
/// with any already-kept feature exceeds `threshold`.
pub fn correlation_filter(
    m: &EncodedMatrix,
    threshold: f64,
) -> Result<CorrelationReport, FeatureError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FeatureError::InvalidThreshold(threshold));
    }
    let p = m.n_features();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| m.column(j)).collect();

    let mut zero_variance = vec![false; p];
    let mut class_corr = vec![0.0; p];
    for j in 0..p {
        match pearson(&columns[j], m.y()) {
            Ok(r) => class_corr[j] = r,
            Err(FeatureError::ZeroVariance) => zero_variance[j] = true,
            Err(e) => return Err(e),
        }
    }

    let mut ff = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let r = match pearson(&columns[a], &columns[b]) {
                Ok(r) => r,
                Err(FeatureError::ZeroVariance) => 0.0,
                Err(e) => return Err(e),
            };
            ff[a][b] = r;
            ff[b][a] = r;
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        class_corr[b]
            .abs()
            .partial_cmp(&class_corr[a].abs())
            .expect("finite correlations")
            .then(a.cmp(&b))
    });

    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    for f in order {
        match kept.iter().find(|&&k| ff[f][k].abs() > threshold) {
            Some(&k) => dropped.push((f, k)),
            None => kept.push(f),
        }
    }

    Ok(CorrelationReport {
        feature_names: m.feature_names().to_vec(),
        feature_class_corr: class_corr,
        feature_feature_corr: ff,
        zero_variance,
        kept,
        dropped,
        threshold,
    })
}

/// Shannon entropy (bits) of a count vector.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Entropy (bits) of the 0/1 label vector.
pub fn label_entropy(y: &[f64]) -> f64 {
    let b = y.iter().filter(|&&v| v >= 0.5).count();
    entropy_from_counts(&[y.len() - b, b])
}

/// Information gain of one feature, treating each distinct value as a category.
pub fn information_gain(m: &EncodedMatrix, feature: usize) -> Result<f64, FeatureError> {
    if feature >= m.n_features() {
        return Err(FeatureError::IndexOutOfBounds {
            index: feature,
            n_features: m.n_features(),
        });
    }
    let n = m.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    // category bits -> [n_nb, n_b]
    let mut table: HashMap<u64, [usize; 2]> = HashMap::new();
    for i in 0..n {
        let key = m.row(i)[feature].to_bits();
        table.entry(key).or_default()[m.label(i).index()] += 1;
    }
    let conditional: f64 = table
        .values()
        .map(|c| (c[0] + c[1]) as f64 / n as f64 * entropy_from_counts(c))
        .sum();
    Ok((label_entropy(m.y()) - conditional).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGain {
    pub feature: usize,
    pub name: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoGainReport {
    /// Descending by gain, ties in column order.
    pub gains: Vec<FeatureGain>,
    pub label_entropy: f64,
}

pub fn rank_features(m: &EncodedMatrix) -> InfoGainReport {
    let mut gains: Vec<FeatureGain> = (0..m.n_features())
        .map(|j| FeatureGain {
            feature: j,
            name: m.feature_names()[j].clone(),
            gain: information_gain(m, j).expect("index in range"),
        })
        .collect();
    gains.sort_by(|a, b| b.gain.partial_cmp(&a.gain).expect("finite gains"));
    InfoGainReport {
        gains,
        label_entropy: label_entropy(m.y()),
    }
}

/// One row of the combined feature report.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub name: String,
    pub class_corr: f64,
    pub info_gain: f64,
    pub kept: bool,
}

pub fn summarize(corr: &CorrelationReport, gains: &InfoGainReport) -> Vec<FeatureSummary> {
    (0..corr.feature_names.len())
        .map(|j| FeatureSummary {
            name: corr.feature_names[j].clone(),
            class_corr: corr.feature_class_corr[j],
            info_gain: gains
                .gains
                .iter()
                .find(|g| g.feature == j)
                .map(|g| g.gain)
                .unwrap_or(0.0),
            kept: corr.is_kept(j),
        })
        .collect()
}

/// Plain-text table for terminals.
pub fn render_feature_table(rows: &[FeatureSummary]) -> String {
    let mut s = format!("{:<8} {:>11} {:>10} {:>6}\n", "feature", "class_corr", "info_gain", "kept");
    for r in rows {
        s.push_str(&format!(
            "{:<8} {:>11.6} {:>10.6} {:>6}\n",
            r.name,
            r.class_corr,
            r.info_gain,
            if r.kept { "yes" } else { "no" }
        ));
    }
    s
}

/// Delimited form: `name,class_corr,info_gain,kept`.
pub fn write_feature_csv<W: Write>(rows: &[FeatureSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "name,class_corr,info_gain,kept")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.name, r.class_corr, r.info_gain, r.kept)?;
    }
    Ok(())
}

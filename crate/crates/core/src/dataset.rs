//! Qualitative bankruptcy records: parsing, validation and numeric encoding.
//!
//! Rows are `R,R,R,R,R,R[,L]` with each rating in `{P, A, N}` and the optional
//! label in `{B, NB}`. Columns are always in the order IR, MR, FF, CR, CO, OR.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of qualitative attributes per record.
pub const N_FEATURES: usize = 6;

/// Short attribute names in column order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["IR", "MR", "FF", "CR", "CO", "OR"];

/// Long attribute names in column order.
pub const FEATURE_DESCRIPTIONS: [&str; N_FEATURES] = [
    "Industrial Risk",
    "Management Risk",
    "Financial Flexibility",
    "Credibility",
    "Competitiveness",
    "Operating Risk",
];

const BUNDLED_CORPUS: &str = include_str!("../data/qualitative_bankruptcy.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("unknown rating `{0}` (expected P, A or N)")]
    UnknownRating(String),
    #[error("unknown label `{0}` (expected B or NB)")]
    UnknownLabel(String),
    #[error("expected 6 or 7 fields, found {0}")]
    Arity(usize),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DatasetError>,
    },
    #[error("dataset contains no records")]
    EmptyDataset,
    #[error("record {0} has no class label")]
    MissingLabel(usize),
    #[error("read error: {0}")]
    Io(String),
}

impl DatasetError {
    /// 1-based line number for errors raised while loading a stream.
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::AtLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One expert rating of a qualitative attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rating {
    Positive,
    Average,
    Negative,
}

impl Rating {
    pub const ALL: [Rating; 3] = [Rating::Positive, Rating::Average, Rating::Negative];

    /// P = 1, A = 0.5, N = 0.
    pub fn encode(self) -> f64 {
        match self {
            Rating::Positive => 1.0,
            Rating::Average => 0.5,
            Rating::Negative => 0.0,
        }
    }

    /// Inverse of [`Rating::encode`]; only the three exact grid values decode.
    pub fn decode(value: f64) -> Option<Rating> {
        if value == 1.0 {
            Some(Rating::Positive)
        } else if value == 0.5 {
            Some(Rating::Average)
        } else if value == 0.0 {
            Some(Rating::Negative)
        } else {
            None
        }
    }

    /// Category index used by count-based models (P=0, A=1, N=2).
    pub fn index(self) -> usize {
        match self {
            Rating::Positive => 0,
            Rating::Average => 1,
            Rating::Negative => 2,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Rating::Positive => "P",
            Rating::Average => "A",
            Rating::Negative => "N",
        }
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Class label. Bankrupt is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Bankrupt,
    NonBankrupt,
}

impl Label {
    /// B = 1, NB = 0.
    pub fn encode(self) -> f64 {
        match self {
            Label::Bankrupt => 1.0,
            Label::NonBankrupt => 0.0,
        }
    }

    pub fn from_encoded(y: f64) -> Label {
        if y >= 0.5 {
            Label::Bankrupt
        } else {
            Label::NonBankrupt
        }
    }

    /// Class index for count tables (NB=0, B=1).
    pub fn index(self) -> usize {
        match self {
            Label::NonBankrupt => 0,
            Label::Bankrupt => 1,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Bankrupt => "B",
            Label::NonBankrupt => "NB",
        }
    }

    pub fn is_bankrupt(self) -> bool {
        self == Label::Bankrupt
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Trimmed, case-insensitive rating parse.
pub fn parse_rating(token: &str) -> Result<Rating, DatasetError> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("P") {
        Ok(Rating::Positive)
    } else if t.eq_ignore_ascii_case("A") {
        Ok(Rating::Average)
    } else if t.eq_ignore_ascii_case("N") {
        Ok(Rating::Negative)
    } else {
        Err(DatasetError::UnknownRating(t.to_string()))
    }
}

pub fn parse_label(token: &str) -> Result<Label, DatasetError> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("B") {
        Ok(Label::Bankrupt)
    } else if t.eq_ignore_ascii_case("NB") {
        Ok(Label::NonBankrupt)
    } else {
        Err(DatasetError::UnknownLabel(t.to_string()))
    }
}

/// One company's six ratings plus an optional class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub ratings: [Rating; N_FEATURES],
    pub label: Option<Label>,
}

impl Record {
    pub fn new(ratings: [Rating; N_FEATURES], label: Option<Label>) -> Self {
        Self { ratings, label }
    }

    pub fn ir(&self) -> Rating {
        self.ratings[0]
    }
    pub fn mr(&self) -> Rating {
        self.ratings[1]
    }
    pub fn ff(&self) -> Rating {
        self.ratings[2]
    }
    pub fn cr(&self) -> Rating {
        self.ratings[3]
    }
    pub fn co(&self) -> Rating {
        self.ratings[4]
    }
    pub fn opr(&self) -> Rating {
        self.ratings[5]
    }

    pub fn encoded(&self) -> [f64; N_FEATURES] {
        self.ratings.map(Rating::encode)
    }

    /// Rebuild an unlabeled record from an encoded row.
    pub fn from_encoded(row: &[f64]) -> Option<Record> {
        if row.len() != N_FEATURES {
            return None;
        }
        let mut ratings = [Rating::Negative; N_FEATURES];
        for (slot, &v) in ratings.iter_mut().zip(row) {
            *slot = Rating::decode(v)?;
        }
        Some(Record::new(ratings, None))
    }

    /// Every possible rating combination (3^6 = 729), unlabeled, in a fixed order.
    pub fn all_rating_combinations() -> Vec<Record> {
        let mut out = Vec::with_capacity(729);
        for code in 0..729usize {
            let mut c = code;
            let mut ratings = [Rating::Positive; N_FEATURES];
            for slot in ratings.iter_mut().rev() {
                *slot = Rating::ALL[c % 3];
                c /= 3;
            }
            out.push(Record::new(ratings, None));
        }
        out
    }
}

/// Parse one comma-separated row. A seventh field is the label.
pub fn parse_record(line: &str) -> Result<Record, DatasetError> {
    let fields: Vec<&str> = line.trim().split(',').collect();
    if fields.len() != N_FEATURES && fields.len() != N_FEATURES + 1 {
        return Err(DatasetError::Arity(fields.len()));
    }
    let mut ratings = [Rating::Negative; N_FEATURES];
    for (slot, tok) in ratings.iter_mut().zip(&fields) {
        *slot = parse_rating(tok)?;
    }
    let label = match fields.get(N_FEATURES) {
        Some(tok) => Some(parse_label(tok)?),
        None => None,
    };
    Ok(Record::new(ratings, label))
}

/// Canonical row form accepted by [`parse_record`].
pub fn format_record(record: &Record) -> String {
    let mut s = record
        .ratings
        .iter()
        .map(|r| r.token())
        .collect::<Vec<_>>()
        .join(",");
    if let Some(label) = record.label {
        s.push(',');
        s.push_str(label.token());
    }
    s
}

/// An ordered, non-empty collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub source: String,
}

impl Dataset {
    pub fn new(records: Vec<Record>, source: impl Into<String>) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        Ok(Self {
            records,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// (NonBankrupt, Bankrupt) counts among labeled records.
    pub fn class_counts(&self) -> (usize, usize) {
        self.records.iter().fold((0, 0), |(nb, b), r| match r.label {
            Some(Label::Bankrupt) => (nb, b + 1),
            Some(Label::NonBankrupt) => (nb + 1, b),
            None => (nb, b),
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, DatasetError> {
        Dataset::new(
            indices.iter().map(|&i| self.records[i]).collect(),
            self.source.clone(),
        )
    }

    /// The 250-row corpus shipped with the crate.
    pub fn bundled() -> Dataset {
        load_dataset(BUNDLED_CORPUS.as_bytes()).expect("bundled corpus parses")
            .with_source("bundled:qualitative_bankruptcy.csv")
    }

    /// Raw bytes of the bundled corpus (used for content hashing).
    pub fn bundled_bytes() -> &'static [u8] {
        BUNDLED_CORPUS.as_bytes()
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

fn looks_like_header(line: &str) -> bool {
    line.split(',').all(|f| parse_rating(f).is_err())
}

/// Load newline-delimited rows. Blank lines are ignored; a first non-blank
/// row made entirely of non-rating tokens is treated as a header.
pub fn load_dataset<R: BufRead>(source: R) -> Result<Dataset, DatasetError> {
    let mut records = Vec::new();
    let mut seen_row = false;
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_row {
            seen_row = true;
            if looks_like_header(trimmed) {
                continue;
            }
        }
        let record = parse_record(trimmed).map_err(|e| DatasetError::AtLine {
            line: i + 1,
            source: Box::new(e),
        })?;
        records.push(record);
    }
    Dataset::new(records, "stream")
}

/// Numeric view of a labeled dataset, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl EncodedMatrix {
    /// Build from explicit rows; every row must have `feature_names.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, feature_names: Vec<String>) -> Self {
        assert_eq!(rows.len(), y.len(), "row count must equal label count");
        let n_features = feature_names.len();
        let mut data = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            assert_eq!(row.len(), n_features, "row width must equal feature count");
            data.extend_from_slice(row);
        }
        Self {
            data,
            n_rows: rows.len(),
            n_features,
            y,
            feature_names,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features.max(1)).take(self.n_rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.data[i * self.n_features + j]).collect()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn label(&self, i: usize) -> Label {
        Label::from_encoded(self.y[i])
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// (NonBankrupt, Bankrupt) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let b = self.y.iter().filter(|&&v| v >= 0.5).count();
        (self.n_rows - b, b)
    }

    pub fn select_rows(&self, indices: &[usize]) -> EncodedMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EncodedMatrix {
            data,
            n_rows: indices.len(),
            n_features: self.n_features,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Keep only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> EncodedMatrix {
        let mut data = Vec::with_capacity(self.n_rows * columns.len());
        for row in self.rows() {
            data.extend(columns.iter().map(|&j| row[j]));
        }
        EncodedMatrix {
            data,
            n_rows: self.n_rows,
            n_features: columns.len(),
            y: self.y.clone(),
            feature_names: columns.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    /// Rebuild labeled records; fails if the matrix is not six columns on the rating grid.
    pub fn to_records(&self) -> Option<Vec<Record>> {
        if self.n_features != N_FEATURES {
            return None;
        }
        (0..self.n_rows)
            .map(|i| {
                Record::from_encoded(self.row(i)).map(|mut r| {
                    r.label = Some(self.label(i));
                    r
                })
            })
            .collect()
    }
}

/// Encode a labeled dataset: P/A/N → 1/0.5/0, B/NB → 1/0.
pub fn encode(dataset: &Dataset) -> Result<EncodedMatrix, DatasetError> {
    let mut data = Vec::with_capacity(dataset.len() * N_FEATURES);
    let mut y = Vec::with_capacity(dataset.len());
    for (i, record) in dataset.records.iter().enumerate() {
        let label = record.label.ok_or(DatasetError::MissingLabel(i))?;
        data.extend(record.encoded());
        y.push(label.encode());
    }
    Ok(EncodedMatrix {
        data,
        n_rows: dataset.len(),
        n_features: N_FEATURES,
        y,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}

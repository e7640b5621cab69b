//! Core domain types: label spaces, decision vectors and profiles, and
//! decision-template fitting.
//!
//! A decision profile stacks the softmax outputs of `K` base classifiers for
//! one sample into a `K x C` row-stochastic matrix. A decision template for
//! class `c` is the elementwise mean of the training profiles labelled `c`.
//!
//! The library fuses whatever profiles it is given. Whether the training
//! profiles come from held-out predictions (e.g. cross-validation folds) or
//! from in-sample predictions of the base models is left to the caller;
//! in-sample outputs tend to be over-confident and produce sharper templates.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Maximum allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// How rows whose sum deviates from 1 are treated at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowSumPolicy {
    /// Reject rows outside `1 ± ROW_SUM_TOLERANCE`.
    #[default]
    Strict,
    /// Divide each row by its sum. Rows must be non-negative with a positive sum.
    Renormalize,
}

fn check_names(what: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if name.is_empty() {
            return Err(Error::validation(format!("empty {what} name")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::validation(format!("duplicate {what} name {name:?}")));
        }
    }
    Ok(())
}

/// Ordered set of `C >= 2` distinct class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::validation(format!(
                "label space needs at least 2 classes, got {}",
                names.len()
            )));
        }
        check_names("class", &names)?;
        Ok(Self { names })
    }

    /// Label space with names `class_0 .. class_{C-1}`.
    pub fn indexed(class_count: usize) -> Result<Self> {
        Self::new((0..class_count).map(|c| format!("class_{c}")))
    }

    pub fn class_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Ordered set of `K >= 1` distinct base-model names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleSpec {
    names: Vec<String>,
}

impl EnsembleSpec {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::validation("ensemble needs at least one model"));
        }
        check_names("model", &names)?;
        Ok(Self { names })
    }

    /// Ensemble with names `model_0 .. model_{K-1}`.
    pub fn indexed(model_count: usize) -> Result<Self> {
        Self::new((0..model_count).map(|k| format!("model_{k}")))
    }

    pub fn model_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Ground-truth class index, checked against a label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CrispLabel(usize);

impl CrispLabel {
    pub fn new(class_index: usize, labels: &LabelSpace) -> Result<Self> {
        if class_index >= labels.class_count() {
            return Err(Error::validation(format!(
                "class index {class_index} out of range for {} classes",
                labels.class_count()
            )));
        }
        Ok(Self(class_index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense row-major matrix with every entry finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::shape("matrix must have at least one row and column"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(format!(
                    "row {k} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), cols, data)
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values do not form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for (index, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index, value: v });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!(
                    "entry ({}, {}) = {v} outside [0, 1]",
                    index / cols,
                    index % cols
                )));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    fn check_row_stochastic(&self, tolerance: f64) -> Result<()> {
        for row in self.row_iter() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::RowSum { sum, tolerance });
            }
        }
        Ok(())
    }
}

/// Unnormalized scores of one classifier over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("empty logit vector"));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One classifier's probability distribution over the classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector(Vec<f64>);

impl DecisionVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_policy(probs, RowSumPolicy::Strict)
    }

    pub fn with_policy(mut probs: Vec<f64>, policy: RowSumPolicy) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::shape("empty decision vector"));
        }
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let sum: f64 = probs.iter().sum();
        if policy == RowSumPolicy::Renormalize && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            if sum <= 0.0 || probs.iter().any(|&p| p < 0.0) {
                return Err(Error::validation(format!(
                    "cannot renormalize row with sum {sum} and negative or zero mass"
                )));
            }
            probs.iter_mut().for_each(|p| *p /= sum);
        } else if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::RowSum { sum, tolerance: ROW_SUM_TOLERANCE });
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("probability {p} at index {i} outside [0, 1]")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lowest index attaining the maximum probability.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the first maximum; `0` for an empty slice.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `K x C` row-stochastic matrix: row `k` is classifier `k`'s output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProfile(ProbMatrix);

impl DecisionProfile {
    /// Validate raw rows, applying `policy` to rows whose sum is off.
    pub fn from_rows(rows: Vec<Vec<f64>>, policy: RowSumPolicy) -> Result<Self> {
        let vectors = rows
            .into_iter()
            .enumerate()
            .map(|(k, row)| {
                DecisionVector::with_policy(row, policy).map_err(|e| match e {
                    Error::RowSum { sum, tolerance } => Error::validation(format!(
                        "row {k} sums to {sum} (expected 1 within {tolerance})"
                    )),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_vectors(vectors)
    }

    pub fn from_vectors(vectors: Vec<DecisionVector>) -> Result<Self> {
        let cols = vectors.first().map_or(0, DecisionVector::len);
        if vectors.is_empty() {
            return Err(Error::shape("decision profile needs at least one row"));
        }
        let rows = vectors.len();
        let mut data = Vec::with_capacity(rows * cols);
        for (k, v) in vectors.into_iter().enumerate() {
            if v.len() != cols {
                return Err(Error::shape(format!(
                    "row {k} has {} classes, expected {cols}",
                    v.len()
                )));
            }
            data.extend(v.into_inner());
        }
        Ok(Self(ProbMatrix::from_flat(rows, cols, data)?))
    }

    pub fn matrix(&self) -> &ProbMatrix {
        &self.0
    }

    pub fn model_count(&self) -> usize {
        self.0.rows()
    }

    pub fn class_count(&self) -> usize {
        self.0.cols()
    }

    /// Largest probability any classifier assigns to any class.
    pub fn max_probability(&self) -> f64 {
        self.0.max_entry()
    }
}

impl AsRef<ProbMatrix> for DecisionProfile {
    fn as_ref(&self) -> &ProbMatrix {
        &self.0
    }
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &LogitVector) -> DecisionVector {
    let values = logits.values();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&w| (w - max).exp()).collect();
    // max term contributes exp(0) = 1, so the sum is in [1, C]
    let sum: f64 = exps.iter().sum();
    DecisionVector(exps.into_iter().map(|e| e / sum).collect())
}

/// Assemble `K` decision vectors (ordered by model index) into a profile.
pub fn build_profile(
    vectors: Vec<DecisionVector>,
    ensemble: &EnsembleSpec,
    labels: &LabelSpace,
) -> Result<DecisionProfile> {
    if vectors.len() != ensemble.model_count() {
        return Err(Error::shape(format!(
            "expected {} decision vectors, got {}",
            ensemble.model_count(),
            vectors.len()
        )));
    }
    if let Some((k, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != labels.class_count()) {
        return Err(Error::shape(format!(
            "decision vector {k} has {} classes, expected {}",
            v.len(),
            labels.class_count()
        )));
    }
    DecisionProfile::from_vectors(vectors)
}

/// Fitted model: one `K x C` template per class plus the training support.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTemplateSet {
    label_space: LabelSpace,
    ensemble: EnsembleSpec,
    templates: Vec<ProbMatrix>,
    support_counts: Vec<usize>,
}

impl DecisionTemplateSet {
    /// Reassemble a template set, re-checking every invariant.
    pub fn from_parts(
        label_space: LabelSpace,
        ensemble: EnsembleSpec,
        templates: Vec<ProbMatrix>,
        support_counts: Vec<usize>,
    ) -> Result<Self> {
        let c = label_space.class_count();
        let k = ensemble.model_count();
        if templates.len() != c {
            return Err(Error::shape(format!("expected {c} templates, got {}", templates.len())));
        }
        if support_counts.len() != c {
            return Err(Error::shape(format!(
                "expected {c} support counts, got {}",
                support_counts.len()
            )));
        }
        for (class, t) in templates.iter().enumerate() {
            if t.shape() != (k, c) {
                return Err(Error::shape(format!(
                    "template {class} is {}x{}, expected {k}x{c}",
                    t.rows(),
                    t.cols()
                )));
            }
            t.check_row_stochastic(ROW_SUM_TOLERANCE).map_err(|e| {
                Error::validation(format!("template {:?}: {e}", label_space.names()[class]))
            })?;
        }
        let empty: Vec<String> = support_counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(i, _)| label_space.names()[i].clone())
            .collect();
        if !empty.is_empty() {
            return Err(Error::EmptyClasses(empty));
        }
        Ok(Self { label_space, ensemble, templates, support_counts })
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn ensemble(&self) -> &EnsembleSpec {
        &self.ensemble
    }

    pub fn templates(&self) -> &[ProbMatrix] {
        &self.templates
    }

    pub fn template(&self, class_index: usize) -> &ProbMatrix {
        &self.templates[class_index]
    }

    pub fn support_counts(&self) -> &[usize] {
        &self.support_counts
    }

    pub fn class_count(&self) -> usize {
        self.label_space.class_count()
    }

    pub fn model_count(&self) -> usize {
        self.ensemble.model_count()
    }
}

/// Fit one template per class as the mean of that class's training profiles.
///
/// Sums accumulate in ascending sample order, so the result is bit-reproducible.
pub fn fit_templates(
    profiles: &[DecisionProfile],
    labels: &[CrispLabel],
    label_space: &LabelSpace,
    ensemble: &EnsembleSpec,
) -> Result<DecisionTemplateSet> {
    if profiles.is_empty() {
        return Err(Error::validation("cannot fit templates on zero samples"));
    }
    if profiles.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} profiles but {} labels",
            profiles.len(),
            labels.len()
        )));
    }
    let (k, c) = (ensemble.model_count(), label_space.class_count());
    let mut sums = vec![vec![0.0f64; k * c]; c];
    let mut counts = vec![0usize; c];
    for (j, (profile, label)) in profiles.iter().zip(labels).enumerate() {
        if profile.matrix().shape() != (k, c) {
            return Err(Error::shape(format!(
                "profile {j} is {}x{}, expected {k}x{c}",
                profile.model_count(),
                profile.class_count()
            )));
        }
        let class = label.index();
        if class >= c {
            return Err(Error::validation(format!("label {class} of sample {j} out of range")));
        }
        for (acc, &p) in sums[class].iter_mut().zip(profile.matrix().as_slice()) {
            *acc += p;
        }
        counts[class] += 1;
    }

    let empty: Vec<String> = counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == 0)
        .map(|(i, _)| label_space.names()[i].clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyClasses(empty));
    }

    let templates = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &n)| {
            let n = n as f64;
            // rounding can push a mean of values in [0,1] a hair outside
            let mean = sum.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect();
            ProbMatrix::from_flat(k, c, mean)
        })
        .collect::<Result<Vec<_>>>()?;

    DecisionTemplateSet::from_parts(label_space.clone(), ensemble.clone(), templates, counts)
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names.join(", "))
    }
}

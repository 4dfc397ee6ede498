//! Confusion-matrix metrics, Rand index, and cluster-to-class alignment.
//!
//! Degenerate denominators follow the 0-convention: precision, recall, and
//! F return 0 when undefined, so all-negative predictions on imbalanced data
//! score poorly instead of crashing.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// Tallies predictions against truth; both vectors are binary.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.true_positive += 1,
            (1, 0) => cm.false_positive += 1,
            (0, 1) => cm.false_negative += 1,
            _ => cm.true_negative += 1,
        }
    }
    Ok(cm)
}

pub fn precision(cm: &ConfusionMatrix) -> f64 {
    let denom = cm.true_positive + cm.false_positive;
    if denom == 0 {
        0.0
    } else {
        cm.true_positive as f64 / denom as f64
    }
}

pub fn recall(cm: &ConfusionMatrix) -> f64 {
    let denom = cm.true_positive + cm.false_negative;
    if denom == 0 {
        0.0
    } else {
        cm.true_positive as f64 / denom as f64
    }
}

/// `tp / (tp + (fp + fn) / 2)`, the harmonic mean of precision and recall.
pub fn f_score(cm: &ConfusionMatrix) -> f64 {
    let denom = cm.true_positive as f64
        + 0.5 * (cm.false_positive as f64 + cm.false_negative as f64);
    if denom == 0.0 {
        0.0
    } else {
        cm.true_positive as f64 / denom
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        0.0
    } else {
        (cm.true_positive + cm.true_negative) as f64 / total as f64
    }
}

/// Fraction of unordered index pairs on which the two labelings agree about
/// same-cluster versus different-cluster membership. Invariant under
/// relabeling of either side.
///
/// Computed from the contingency table in O(n + k²); vectors shorter than two
/// elements have no pairs and score 1.0 vacuously.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    use std::collections::HashMap;
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let choose2 = |m: usize| (m * m.saturating_sub(1) / 2) as f64;
    let same_same: f64 = cells.values().map(|&m| choose2(m)).sum();
    let same_a: f64 = rows.values().map(|&m| choose2(m)).sum();
    let same_b: f64 = cols.values().map(|&m| choose2(m)).sum();
    let total = choose2(n);
    // Agreements = pairs together in both + pairs apart in both.
    let agreeing = total + 2.0 * same_same - same_a - same_b;
    Ok(agreeing / total)
}

/// The cluster-to-class permutation for binary clusterings, chosen on
/// training data and then applied unchanged to test predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterAlignment {
    /// Cluster 0 maps to this class; cluster 1 maps to its complement.
    pub cluster0_class: u8,
}

impl ClusterAlignment {
    /// Picks the permutation maximizing F score against the training truth.
    /// Ties keep the identity mapping.
    pub fn fit(cluster_labels: &[usize], truth: &[u8]) -> Result<Self, EvalError> {
        let identity: Vec<u8> = cluster_labels.iter().map(|&c| c as u8).collect();
        let flipped: Vec<u8> = cluster_labels.iter().map(|&c| 1 - c as u8).collect();
        let f_id = f_score(&confusion(&identity, truth)?);
        let f_fl = f_score(&confusion(&flipped, truth)?);
        Ok(ClusterAlignment { cluster0_class: if f_fl > f_id { 1 } else { 0 } })
    }

    pub fn apply(&self, cluster_labels: &[usize]) -> Vec<u8> {
        cluster_labels
            .iter()
            .map(|&c| {
                if c == 0 {
                    self.cluster0_class
                } else {
                    1 - self.cluster0_class
                }
            })
            .collect()
    }
}

/// One-shot alignment: fits the permutation on `truth` and returns the
/// aligned predictions for the same labels.
pub fn align_clusters(cluster_labels: &[usize], truth: &[u8]) -> Result<Vec<u8>, EvalError> {
    Ok(ClusterAlignment::fit(cluster_labels, truth)?.apply(cluster_labels))
}

/// The metric bundle reported for one scored prediction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub rand_index: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(pred: &[u8], truth: &[u8]) -> Result<Self, EvalError> {
        let cm = confusion(pred, truth)?;
        let pred_usize: Vec<usize> = pred.iter().map(|&p| p as usize).collect();
        let truth_usize: Vec<usize> = truth.iter().map(|&t| t as usize).collect();
        Ok(EvalReport {
            accuracy: accuracy(&cm),
            precision: precision(&cm),
            recall: recall(&cm),
            f_score: f_score(&cm),
            rand_index: rand_index(&pred_usize, &truth_usize)?,
            confusion: cm,
        })
    }

    /// Flat key-value block, one metric per line.
    pub fn to_text(&self) -> String {
        format!(
            "accuracy = {:.6}\nprecision = {:.6}\nrecall = {:.6}\nf_score = {:.6}\nrand_index = {:.6}\ntp = {}\nfp = {}\nfn = {}\ntn = {}\n",
            self.accuracy,
            self.precision,
            self.recall,
            self.f_score,
            self.rand_index,
            self.confusion.true_positive,
            self.confusion.false_positive,
            self.confusion.false_negative,
            self.confusion.true_negative,
        )
    }

    /// CSV row in the `algorithm,ml_pct,cl_pct,frac_11,seed,accuracy,f_score,rand_index`
    /// schema.
    pub fn to_csv_row(
        &self,
        algorithm: &str,
        ml_pct: f64,
        cl_pct: f64,
        frac_11: f64,
        seed: u64,
    ) -> String {
        format!(
            "{algorithm},{ml_pct},{cl_pct},{frac_11},{seed},{:.12},{:.12},{:.12}",
            self.accuracy, self.f_score, self.rand_index
        )
    }
}

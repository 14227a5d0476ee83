//! Confusion matrix, balanced accuracy, accuracy, macro ROC AUC and
//! inverse-frequency class weights.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::openset::OutlierSummary;
use crate::scalar::Scalar;
use crate::taxonomy::LabeledRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("true labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("class {0} has a zero count")]
    ZeroCount(usize),
    #[error("no class counts given")]
    NoClasses,
    #[error("{predictions} predictions for {records} records")]
    PredictionCountMismatch { records: usize, predictions: usize },
    #[error("record `{sample_id}` has {found} scores, expected {expected}")]
    ScoreCountMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
}

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let n = counts.len();
        if let Some(row) = counts.iter().find(|row| row.len() != n) {
            return Err(MetricsError::LabelOutOfRange {
                label: row.len(),
                n_classes: n,
            });
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    /// Recall per class; `None` for classes without true samples.
    pub fn per_class_recall<T: Scalar>(&self) -> Vec<Option<T>> {
        (0..self.n_classes())
            .map(|c| {
                let row = self.row_sum(c);
                (row > 0)
                    .then(|| T::from_u64(self.counts[c][c]).unwrap() / T::from_u64(row).unwrap())
            })
            .collect()
    }
}

/// Tallies `(true, predicted)` pairs.
pub fn confusion_matrix(
    n_classes: usize,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<ConfusionMatrix, MetricsError> {
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (truth, predicted) in pairs {
        for label in [truth, predicted] {
            if label >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label, n_classes });
            }
        }
        cm.counts[truth][predicted] += 1;
    }
    Ok(cm)
}

/// Mean recall over classes that have at least one true sample.
pub fn balanced_accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T, MetricsError> {
    let recalls: Vec<T> = cm.per_class_recall().into_iter().flatten().collect();
    if recalls.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = T::from_count(recalls.len());
    Ok(recalls.into_iter().sum::<T>() / n)
}

pub fn accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::EmptyMatrix),
        total => Ok(T::from_u64(cm.trace()).unwrap() / T::from_u64(total).unwrap()),
    }
}

/// One-vs-rest AUC for a single class from the Mann-Whitney rank sum.
///
/// Returns `None` when there are no positives or no negatives.
pub fn binary_auc<T: Scalar>(scores: &[T], positive: &[bool]) -> Option<T> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Twice the rank sum keeps mid-ranks of tied runs integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share the midrank (start + 1 + end) / 2.
        let doubled_mid = (start + 1 + end) as u128;
        let pos_in_run = order[start..end].iter().filter(|&&i| positive[i]).count() as u128;
        doubled_rank_sum += doubled_mid * pos_in_run;
        start = end;
    }
    let n_pos_u = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos_u * (n_pos_u + 1);
    let pairs = T::from_count(n_pos) * T::from_count(n_neg);
    Some(T::from_u128(doubled_u).unwrap() / T::lit(2.0) / pairs)
}

/// Macro-averaged one-vs-rest ROC AUC over classes present in the labels.
pub fn macro_auc<T: Scalar>(records: &[LabeledRecord<T>]) -> Result<T, MetricsError> {
    let Some(first) = records.first() else {
        return Err(MetricsError::DegenerateLabels);
    };
    let n = first.probs.len();
    if let Some(r) = records.iter().find(|r| r.probs.len() != n) {
        return Err(MetricsError::ScoreCountMismatch {
            sample_id: r.sample_id.clone(),
            expected: n,
            found: r.probs.len(),
        });
    }
    let mut per_class = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(records.len());
    let mut positive = Vec::with_capacity(records.len());
    for c in 0..n {
        scores.clear();
        positive.clear();
        scores.extend(records.iter().map(|r| r.probs.as_slice()[c]));
        positive.extend(records.iter().map(|r| r.true_label == c));
        if let Some(auc) = binary_auc(&scores, &positive) {
            per_class.push(auc);
        }
    }
    if per_class.is_empty() {
        return Err(MetricsError::DegenerateLabels);
    }
    let k = T::from_count(per_class.len());
    Ok(per_class.into_iter().sum::<T>() / k)
}

/// Inverse-frequency weights `N / (K · n_c)`.
///
/// The weights average to one under the class distribution, i.e.
/// `Σ n_c · w_c = N`.
pub fn class_weights<T: Scalar>(counts: &[u64]) -> Result<Vec<T>, MetricsError> {
    if counts.is_empty() {
        return Err(MetricsError::NoClasses);
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(MetricsError::ZeroCount(c));
    }
    let total = T::from_u64(counts.iter().sum()).unwrap();
    let k = T::from_count(counts.len());
    Ok(counts
        .iter()
        .map(|&n| total / (k * T::from_u64(n).unwrap()))
        .collect())
}

/// Every figure of merit for one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    pub labels: Vec<String>,
    pub samples: usize,
    pub balanced_accuracy: T,
    pub accuracy: T,
    /// `None` when fewer than two classes occur in the true labels.
    pub macro_auc: Option<T>,
    pub per_class_recall: Vec<Option<T>>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outliers: Option<OutlierSummary>,
}

impl<T: Scalar> EvaluationReport<T> {
    /// Scores `records` against `predicted`, one label per record.
    ///
    /// `labels` names the columns of the score vectors; AUC uses the full
    /// score vectors while the confusion matrix uses `predicted`.
    pub fn compute(
        labels: &[String],
        records: &[LabeledRecord<T>],
        predicted: &[usize],
    ) -> Result<Self, MetricsError> {
        if records.len() != predicted.len() {
            return Err(MetricsError::PredictionCountMismatch {
                records: records.len(),
                predictions: predicted.len(),
            });
        }
        let n = labels.len();
        if let Some(r) = records.iter().find(|r| r.probs.len() != n) {
            return Err(MetricsError::ScoreCountMismatch {
                sample_id: r.sample_id.clone(),
                expected: n,
                found: r.probs.len(),
            });
        }
        let confusion = confusion_matrix(
            n,
            records
                .iter()
                .zip(predicted)
                .map(|(r, &p)| (r.true_label, p)),
        )?;
        let macro_auc = match macro_auc(records) {
            Ok(v) => Some(v),
            Err(MetricsError::DegenerateLabels) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            labels: labels.to_vec(),
            samples: records.len(),
            balanced_accuracy: balanced_accuracy(&confusion)?,
            accuracy: accuracy(&confusion)?,
            macro_auc,
            per_class_recall: confusion.per_class_recall(),
            confusion,
            outliers: None,
        })
    }

    /// Uses each record's argmax as its prediction.
    pub fn from_argmax(
        labels: &[String],
        records: &[LabeledRecord<T>],
    ) -> Result<Self, MetricsError> {
        let predicted: Vec<usize> = records.iter().map(LabeledRecord::predicted).collect();
        Self::compute(labels, records, &predicted)
    }
}

impl<T: Scalar> fmt::Display for EvaluationReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples            {}", self.samples)?;
        writeln!(f, "balanced accuracy  {:.3}", self.balanced_accuracy)?;
        writeln!(f, "accuracy           {:.3}", self.accuracy)?;
        match self.macro_auc {
            Some(auc) => writeln!(f, "macro AUC          {auc:.3}")?,
            None => writeln!(f, "macro AUC          n/a")?,
        }
        if let Some(o) = &self.outliers {
            writeln!(
                f,
                "outliers           {} ({:.2}%)",
                o.outliers, o.percentage
            )?;
        }
        writeln!(f)?;
        let width = self
            .labels
            .iter()
            .map(String::len)
            .chain(
                self.confusion
                    .counts()
                    .iter()
                    .flatten()
                    .map(|c| c.to_string().len()),
            )
            .max()
            .unwrap_or(1)
            .max(6);
        write!(f, "{:>width$}", "true\\pred")?;
        for label in &self.labels {
            write!(f, " {label:>width$}")?;
        }
        writeln!(f, " {:>width$}", "recall")?;
        for (i, row) in self.confusion.counts().iter().enumerate() {
            write!(f, "{:>width$}", self.labels[i])?;
            for count in row {
                write!(f, " {count:>width$}")?;
            }
            match self.per_class_recall[i] {
                Some(r) => writeln!(f, " {r:>width$.3}")?,
                None => writeln!(f, " {:>width$}", "-")?,
            }
        }
        Ok(())
    }
}

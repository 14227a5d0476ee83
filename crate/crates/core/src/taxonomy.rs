//! Class taxonomy, probability vectors and sample records.
//!
//! Every other module works in terms of label *indices* into a
//! [`ClassTaxonomy`]; label strings only appear at the IO boundary.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Known ISIC 2019 diagnostic labels, in submission column order.
pub const ISIC2019_LABELS: [&str; 8] = ["MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC"];

/// Label of the out-of-distribution class.
pub const UNKNOWN_LABEL: &str = "UNK";

/// Default tolerance on the sum of a probability vector.
pub const DEFAULT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaxonomyError {
    #[error("taxonomy has no known labels")]
    NoLabels,
    #[error("empty label string")]
    EmptyLabel,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown label `{0}` collides with a known label")]
    UnknownLabelCollision(String),
    #[error("expected {expected} probabilities, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entry {index} is not finite")]
    NonFiniteEntry { index: usize },
    #[error("probabilities sum to {sum}, outside tolerance {tolerance}")]
    SumOutOfTolerance { sum: f64, tolerance: f64 },
    #[error("k = {k} outside 1..={len}")]
    KOutOfRange { k: usize, len: usize },
    #[error("empty sample id")]
    EmptySampleId,
    #[error("true label {label} outside 0..{len}")]
    LabelOutOfRange { label: usize, len: usize },
}

/// Ordered set of known diagnostic labels plus the outlier label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTaxonomy", into = "RawTaxonomy")]
pub struct ClassTaxonomy {
    known: Vec<String>,
    unknown: String,
}

#[derive(Serialize, Deserialize)]
struct RawTaxonomy {
    known_labels: Vec<String>,
    unknown_label: String,
}

impl TryFrom<RawTaxonomy> for ClassTaxonomy {
    type Error = TaxonomyError;

    fn try_from(raw: RawTaxonomy) -> Result<Self, Self::Error> {
        ClassTaxonomy::new(raw.known_labels, raw.unknown_label)
    }
}

impl From<ClassTaxonomy> for RawTaxonomy {
    fn from(t: ClassTaxonomy) -> Self {
        RawTaxonomy {
            known_labels: t.known,
            unknown_label: t.unknown,
        }
    }
}

impl ClassTaxonomy {
    pub fn new<S: Into<String>>(
        known: impl IntoIterator<Item = S>,
        unknown: impl Into<String>,
    ) -> Result<Self, TaxonomyError> {
        let known: Vec<String> = known.into_iter().map(Into::into).collect();
        let unknown = unknown.into();
        if known.is_empty() {
            return Err(TaxonomyError::NoLabels);
        }
        for (i, label) in known.iter().enumerate() {
            if label.is_empty() {
                return Err(TaxonomyError::EmptyLabel);
            }
            if known[..i].contains(label) {
                return Err(TaxonomyError::DuplicateLabel(label.clone()));
            }
        }
        if unknown.is_empty() {
            return Err(TaxonomyError::EmptyLabel);
        }
        if known.contains(&unknown) {
            return Err(TaxonomyError::UnknownLabelCollision(unknown));
        }
        Ok(Self { known, unknown })
    }

    /// The eight ISIC 2019 classes with `UNK` as the outlier label.
    pub fn isic2019() -> Self {
        Self::new(ISIC2019_LABELS, UNKNOWN_LABEL).expect("static taxonomy is valid")
    }

    /// Number of known classes.
    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn known_labels(&self) -> &[String] {
        &self.known
    }

    pub fn unknown_label(&self) -> &str {
        &self.unknown
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.known.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.known.iter().position(|l| l == label)
    }

    /// Known labels followed by the outlier label.
    pub fn open_set_labels(&self) -> Vec<String> {
        let mut labels = self.known.clone();
        labels.push(self.unknown.clone());
        labels
    }
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self::isic2019()
    }
}

/// A validated distribution over the known classes.
///
/// Entries are non-negative and sum to one. Construction through
/// [`ProbabilityVector::validate`] silently renormalizes vectors whose sum is
/// off by no more than the tolerance and rejects anything else.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityVector<T>(Vec<T>);

impl<T: Scalar> ProbabilityVector<T> {
    pub fn validate(
        values: Vec<T>,
        expected_len: usize,
        tolerance: T,
    ) -> Result<Self, TaxonomyError> {
        if values.len() != expected_len {
            return Err(TaxonomyError::LengthMismatch {
                expected: expected_len,
                found: values.len(),
            });
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(TaxonomyError::NonFiniteEntry { index });
            }
            if v < T::zero() {
                return Err(TaxonomyError::NegativeEntry {
                    index,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let sum: T = values.iter().copied().sum();
        let deviation = (sum - T::one()).abs();
        if deviation > tolerance {
            return Err(TaxonomyError::SumOutOfTolerance {
                sum: sum.to_f64().unwrap_or(f64::NAN),
                tolerance: tolerance.to_f64().unwrap_or(f64::NAN),
            });
        }
        // Sums already within rounding noise of one are left untouched; this
        // keeps validation idempotent.
        let rounding_slack = T::epsilon() * T::from_count(expected_len.max(1) * 2);
        if deviation > rounding_slack {
            let values = values.into_iter().map(|v| v / sum).collect();
            return Ok(Self(values));
        }
        Ok(Self(values))
    }

    /// Validates with [`DEFAULT_SUM_TOLERANCE`].
    pub fn new(values: Vec<T>, expected_len: usize) -> Result<Self, TaxonomyError> {
        Self::validate(values, expected_len, T::lit(DEFAULT_SUM_TOLERANCE))
    }

    pub fn uniform(len: usize) -> Self {
        let v = T::one() / T::from_count(len);
        Self(vec![v; len])
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut values = vec![T::zero(); len];
        values[index] = T::one();
        Self(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<T> {
        self.0.get(index).copied()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// The `k` most probable classes, descending, ties by ascending index.
    pub fn top_k(&self, k: usize) -> Result<Vec<(usize, T)>, TaxonomyError> {
        top_k(&self.0, k)
    }
}

impl<T> AsRef<[T]> for ProbabilityVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for ProbabilityVector<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<T>::deserialize(deserializer)?;
        let len = values.len();
        ProbabilityVector::new(values, len).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn descending_then_index<T: Scalar>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The `k` largest entries of `values`, descending, ties by ascending index.
pub fn top_k<T: Scalar>(values: &[T], k: usize) -> Result<Vec<(usize, T)>, TaxonomyError> {
    if k == 0 || k > values.len() {
        return Err(TaxonomyError::KOutOfRange {
            k,
            len: values.len(),
        });
    }
    let mut ranked: Vec<(usize, T)> = values.iter().copied().enumerate().collect();
    ranked.sort_by(descending_then_index);
    ranked.truncate(k);
    Ok(ranked)
}

/// One sample's classifier output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRecord<T: Scalar> {
    pub sample_id: String,
    pub probs: ProbabilityVector<T>,
}

impl<T: Scalar> ProbabilityRecord<T> {
    pub fn new(
        sample_id: impl Into<String>,
        probs: ProbabilityVector<T>,
    ) -> Result<Self, TaxonomyError> {
        let sample_id = sample_id.into();
        if sample_id.is_empty() {
            return Err(TaxonomyError::EmptySampleId);
        }
        Ok(Self { sample_id, probs })
    }

    pub fn predicted(&self) -> usize {
        self.probs.argmax()
    }
}

/// A classifier output paired with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord<T: Scalar> {
    pub sample_id: String,
    pub probs: ProbabilityVector<T>,
    pub true_label: usize,
}

impl<T: Scalar> LabeledRecord<T> {
    pub fn new(
        sample_id: impl Into<String>,
        probs: ProbabilityVector<T>,
        true_label: usize,
    ) -> Result<Self, TaxonomyError> {
        let sample_id = sample_id.into();
        if sample_id.is_empty() {
            return Err(TaxonomyError::EmptySampleId);
        }
        if true_label >= probs.len() {
            return Err(TaxonomyError::LabelOutOfRange {
                label: true_label,
                len: probs.len(),
            });
        }
        Ok(Self {
            sample_id,
            probs,
            true_label,
        })
    }

    pub fn predicted(&self) -> usize {
        self.probs.argmax()
    }

    pub fn is_hit(&self) -> bool {
        self.predicted() == self.true_label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_taxonomy_has_eight_known_labels() {
        let t = ClassTaxonomy::default();
        assert_eq!(t.len(), 8);
        assert_eq!(t.label(0), Some("MEL"));
        assert_eq!(t.label(7), Some("SCC"));
        assert_eq!(t.unknown_label(), "UNK");
        assert_eq!(t.index_of("DF"), Some(5));
        assert_eq!(t.open_set_labels().len(), 9);
    }

    #[test]
    fn taxonomy_rejects_bad_labels() {
        assert_eq!(
            ClassTaxonomy::new(["A", "A"], "U"),
            Err(TaxonomyError::DuplicateLabel("A".into()))
        );
        assert_eq!(
            ClassTaxonomy::new(["A", "U"], "U"),
            Err(TaxonomyError::UnknownLabelCollision("U".into()))
        );
        assert_eq!(
            ClassTaxonomy::new(Vec::<String>::new(), "U"),
            Err(TaxonomyError::NoLabels)
        );
        assert_eq!(
            ClassTaxonomy::new(["A", ""], "U"),
            Err(TaxonomyError::EmptyLabel)
        );
    }

    #[test]
    fn taxonomy_json_is_validated() {
        let bad = r#"{"known_labels":["A","A"],"unknown_label":"U"}"#;
        assert!(serde_json::from_str::<ClassTaxonomy>(bad).is_err());
        let t = ClassTaxonomy::isic2019();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<ClassTaxonomy>(&json).unwrap(), t);
    }

    #[test]
    fn one_hot_and_uniform_accepted_unchanged() {
        let one_hot = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let v = ProbabilityVector::<f64>::new(one_hot.clone(), 8).unwrap();
        assert_eq!(v.as_slice(), one_hot.as_slice());

        let uniform = vec![0.125; 8];
        let v = ProbabilityVector::<f64>::new(uniform.clone(), 8).unwrap();
        assert_eq!(v.as_slice(), uniform.as_slice());
    }

    #[test]
    fn near_unit_sum_is_renormalized() {
        let raw = vec![0.5, 0.5000004, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let sum: f64 = raw.iter().sum();
        let v = ProbabilityVector::<f64>::validate(raw.clone(), 8, 1e-6).unwrap();
        for (got, orig) in v.as_slice().iter().zip(&raw) {
            assert_eq!(*got, orig / sum);
        }
        let total: f64 = v.as_slice().iter().sum();
        assert!((total - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            ProbabilityVector::<f64>::new(vec![0.5, 0.5], 3),
            Err(TaxonomyError::LengthMismatch {
                expected: 3,
                found: 2
            })
        );
        assert!(matches!(
            ProbabilityVector::<f64>::new(vec![1.2, -0.2], 2),
            Err(TaxonomyError::NegativeEntry { index: 1, .. })
        ));
        assert!(matches!(
            ProbabilityVector::<f64>::new(vec![0.5, 0.6], 2),
            Err(TaxonomyError::SumOutOfTolerance { .. })
        ));
        assert!(matches!(
            ProbabilityVector::<f64>::new(vec![f64::NAN, 1.0], 2),
            Err(TaxonomyError::NonFiniteEntry { index: 0 })
        ));
    }

    #[test]
    fn top_k_examples() {
        let v = ProbabilityVector::<f64>::one_hot(8, 2);
        assert_eq!(v.top_k(1).unwrap(), vec![(2, 1.0)]);

        let v = ProbabilityVector::<f64>::uniform(8);
        assert_eq!(v.top_k(2).unwrap(), vec![(0, 0.125), (1, 0.125)]);

        let v =
            ProbabilityVector::<f64>::new(vec![0.1, 0.4, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0], 8).unwrap();
        assert_eq!(v.top_k(2).unwrap(), vec![(1, 0.4), (2, 0.3)]);

        assert_eq!(v.top_k(0), Err(TaxonomyError::KOutOfRange { k: 0, len: 8 }));
        assert_eq!(v.top_k(9), Err(TaxonomyError::KOutOfRange { k: 9, len: 8 }));
    }

    #[test]
    fn records_validate_ids_and_labels() {
        let p = ProbabilityVector::<f64>::uniform(3);
        assert_eq!(
            ProbabilityRecord::new("", p.clone()),
            Err(TaxonomyError::EmptySampleId)
        );
        assert_eq!(
            LabeledRecord::new("a", p.clone(), 3),
            Err(TaxonomyError::LabelOutOfRange { label: 3, len: 3 })
        );
        let r = LabeledRecord::new("a", p, 0).unwrap();
        assert!(r.is_hit());
    }

    #[test]
    fn works_for_f32() {
        let v = ProbabilityVector::<f32>::new(vec![0.25, 0.75], 2).unwrap();
        assert_eq!(v.argmax(), 1);
    }

    fn random_distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_filter_map("non-zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-3).then(|| raw.iter().map(|v| v / s).collect())
        })
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(raw in random_distribution(8)) {
            let once = ProbabilityVector::<f64>::new(raw, 8).unwrap();
            let twice = ProbabilityVector::<f64>::new(once.as_slice().to_vec(), 8).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn renormalization_is_idempotent(raw in random_distribution(8), drift in -9e-7f64..9e-7) {
            let scaled: Vec<f64> = raw.iter().map(|v| v * (1.0 + drift)).collect();
            let once = ProbabilityVector::<f64>::new(scaled, 8).unwrap();
            let sum: f64 = once.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 16.0 * f64::EPSILON);
            let twice = ProbabilityVector::<f64>::new(once.as_slice().to_vec(), 8).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn top_k_is_sorted_and_led_by_argmax(raw in random_distribution(8), k in 1usize..=8) {
            let v = ProbabilityVector::<f64>::new(raw, 8).unwrap();
            let top = v.top_k(k).unwrap();
            prop_assert_eq!(top.len(), k);
            prop_assert_eq!(top[0].0, v.argmax());
            let max = v.as_slice().iter().copied().fold(f64::MIN, f64::max);
            prop_assert_eq!(top[0].1, max);
            for pair in top.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1);
            }
        }
    }
}

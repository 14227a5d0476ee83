//! Unknown-class rejection from per-class entropy statistics.
//!
//! A profile is fitted on labelled validation outputs. For every class `c`
//! it summarises two groups of records predicted as `c`: the *hit* group
//! (true label `c`) and the *miss* group (any other true label). Each group
//! keeps its mean and maximum entropy and its mean probability vector.
//!
//! A test record predicted as `c` with entropy `h` is flagged unknown when
//!
//! 1. `h` exceeds both the hit and the miss mean entropy of `c`,
//! 2. `h` exceeds the midpoint of the hit and miss maximum entropies, and
//! 3. the record is closer (cosine) to the miss mean vector than to the hit
//!    mean vector.
//!
//! [`Step5Mode::Standalone`] lets the similarity test decide on its own.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{cosine_similarity, shannon_entropy, SimilarityError};
use crate::scalar::Scalar;
use crate::taxonomy::{ClassTaxonomy, LabeledRecord, ProbabilityRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpenSetError {
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("record `{sample_id}` has {found} classes, profile has {expected}")]
    ClassCountMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("profile document lists label `{0}` which is not in the taxonomy")]
    UnknownLabel(String),
    #[error("profile document has no entry for label `{0}`")]
    MissingLabel(String),
    #[error("inconsistent group statistics for label `{0}`")]
    InvalidGroup(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Summary statistics of one hit or miss group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats<T> {
    pub count: usize,
    /// Mean entropy in bits.
    pub mean_entropy: T,
    /// Maximum entropy in bits.
    pub max_entropy: T,
    pub mean_probs: Vec<T>,
}

/// Hit and miss statistics for records predicted as one class.
///
/// An empty group is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile<T> {
    pub hit: Option<GroupStats<T>>,
    pub miss: Option<GroupStats<T>>,
}

impl<T: Scalar> ClassProfile<T> {
    pub fn hit_count(&self) -> usize {
        self.hit.as_ref().map_or(0, |g| g.count)
    }

    pub fn miss_count(&self) -> usize {
        self.miss.as_ref().map_or(0, |g| g.count)
    }

    /// A class without any correctly classified validation record cannot be
    /// used for rejection.
    pub fn is_fittable(&self) -> bool {
        self.hit.is_some()
    }
}

/// Per-class entropy profile fitted on validation data.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile<T> {
    classes: Vec<ClassProfile<T>>,
}

impl<T: Scalar> EntropyProfile<T> {
    pub fn from_classes(classes: Vec<ClassProfile<T>>) -> Self {
        Self { classes }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, index: usize) -> Option<&ClassProfile<T>> {
        self.classes.get(index)
    }

    pub fn classes(&self) -> &[ClassProfile<T>] {
        &self.classes
    }

    /// Serializable form keyed by label.
    pub fn to_document(&self, taxonomy: &ClassTaxonomy) -> ProfileDocument<T> {
        let classes = taxonomy
            .known_labels()
            .iter()
            .cloned()
            .zip(self.classes.iter().cloned())
            .collect();
        ProfileDocument {
            taxonomy: taxonomy.clone(),
            classes,
        }
    }

    /// Rebuilds a profile in `taxonomy` order from its document form.
    pub fn from_document(
        doc: ProfileDocument<T>,
        taxonomy: &ClassTaxonomy,
    ) -> Result<Self, OpenSetError> {
        let n = taxonomy.len();
        if let Some(label) = doc.classes.keys().find(|l| taxonomy.index_of(l).is_none()) {
            return Err(OpenSetError::UnknownLabel(label.clone()));
        }
        let mut classes = Vec::with_capacity(n);
        for label in taxonomy.known_labels() {
            let class = doc
                .classes
                .get(label)
                .cloned()
                .ok_or_else(|| OpenSetError::MissingLabel(label.clone()))?;
            for group in [&class.hit, &class.miss].into_iter().flatten() {
                let consistent = group.count > 0
                    && group.mean_probs.len() == n
                    && group.mean_entropy >= T::zero()
                    && group.mean_entropy <= group.max_entropy;
                if !consistent {
                    return Err(OpenSetError::InvalidGroup(label.clone()));
                }
            }
            classes.push(class);
        }
        Ok(Self { classes })
    }
}

/// JSON layout of an [`EntropyProfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument<T> {
    pub taxonomy: ClassTaxonomy,
    pub classes: IndexMap<String, ClassProfile<T>>,
}

struct GroupAccumulator<T> {
    count: usize,
    entropy_sum: T,
    entropy_max: T,
    prob_sums: Vec<T>,
}

impl<T: Scalar> GroupAccumulator<T> {
    fn new(n_classes: usize) -> Self {
        Self {
            count: 0,
            entropy_sum: T::zero(),
            entropy_max: T::zero(),
            prob_sums: vec![T::zero(); n_classes],
        }
    }

    fn push(&mut self, probs: &[T], entropy: T) {
        self.count += 1;
        self.entropy_sum = self.entropy_sum + entropy;
        self.entropy_max = self.entropy_max.max(entropy);
        for (acc, &p) in self.prob_sums.iter_mut().zip(probs) {
            *acc = *acc + p;
        }
    }

    fn finish(self) -> Option<GroupStats<T>> {
        if self.count == 0 {
            return None;
        }
        let n = T::from_count(self.count);
        Some(GroupStats {
            count: self.count,
            mean_entropy: self.entropy_sum / n,
            max_entropy: self.entropy_max,
            mean_probs: self.prob_sums.into_iter().map(|s| s / n).collect(),
        })
    }
}

/// Fits hit/miss statistics per *predicted* class in a single pass.
pub fn fit_entropy_profile<T: Scalar>(
    validation: &[LabeledRecord<T>],
) -> Result<EntropyProfile<T>, OpenSetError> {
    let first = validation.first().ok_or(OpenSetError::EmptyValidationSet)?;
    let n = first.probs.len();
    let mut hits: Vec<GroupAccumulator<T>> = (0..n).map(|_| GroupAccumulator::new(n)).collect();
    let mut misses: Vec<GroupAccumulator<T>> = (0..n).map(|_| GroupAccumulator::new(n)).collect();

    for record in validation {
        if record.probs.len() != n {
            return Err(OpenSetError::ClassCountMismatch {
                sample_id: record.sample_id.clone(),
                expected: n,
                found: record.probs.len(),
            });
        }
        let predicted = record.predicted();
        let h = shannon_entropy(record.probs.as_slice());
        let group = if predicted == record.true_label {
            &mut hits[predicted]
        } else {
            &mut misses[predicted]
        };
        group.push(record.probs.as_slice(), h);
    }

    let classes = hits
        .into_iter()
        .zip(misses)
        .map(|(hit, miss)| ClassProfile {
            hit: hit.finish(),
            miss: miss.finish(),
        })
        .collect();
    Ok(EntropyProfile { classes })
}

/// How the cosine-similarity test combines with the entropy tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step5Mode {
    /// Unknown only if both entropy tests and the similarity test pass.
    #[default]
    Conjunctive,
    /// The similarity test alone decides.
    Standalone,
}

impl std::str::FromStr for Step5Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conjunctive" => Ok(Self::Conjunctive),
            "standalone" => Ok(Self::Standalone),
            other => Err(format!("unknown step5 mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Step5Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Conjunctive => "conjunctive",
            Self::Standalone => "standalone",
        })
    }
}

/// Furthest rejection test a record passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStage {
    /// Entropy not above both mean entropies.
    PassedNone,
    /// Entropy above both mean entropies (step 3).
    PassedStep3,
    /// Entropy also above the midpoint of the maxima (step 4).
    PassedStep4,
    /// Rejected as unknown.
    FlaggedUnknown,
}

impl std::fmt::Display for DecisionStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PassedNone => "passed_none",
            Self::PassedStep3 => "passed_step3",
            Self::PassedStep4 => "passed_step4",
            Self::FlaggedUnknown => "flagged_unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionWarning {
    /// The predicted class has no hit group; the record is kept as a lesion.
    UnfittableClass,
    /// The predicted class has no miss group; hit statistics and the uniform
    /// vector stood in for it.
    MissGroupSubstituted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierDecision<T> {
    pub sample_id: String,
    pub predicted_label: usize,
    pub entropy_bits: T,
    pub stage_reached: DecisionStage,
    pub is_unknown: bool,
    pub warning: Option<DecisionWarning>,
}

/// Applies the rejection rule to one record.
pub fn detect_unknown<T: Scalar>(
    record: &ProbabilityRecord<T>,
    profile: &EntropyProfile<T>,
    mode: Step5Mode,
) -> Result<OutlierDecision<T>, OpenSetError> {
    let n = profile.n_classes();
    let probs = record.probs.as_slice();
    if probs.len() != n {
        return Err(OpenSetError::ClassCountMismatch {
            sample_id: record.sample_id.clone(),
            expected: n,
            found: probs.len(),
        });
    }
    let predicted = record.predicted();
    let h = shannon_entropy(probs);
    let lesion = |stage, warning| OutlierDecision {
        sample_id: record.sample_id.clone(),
        predicted_label: predicted,
        entropy_bits: h,
        stage_reached: stage,
        is_unknown: false,
        warning,
    };

    let class = &profile.classes[predicted];
    let Some(hit) = class.hit.as_ref() else {
        return Ok(lesion(
            DecisionStage::PassedNone,
            Some(DecisionWarning::UnfittableClass),
        ));
    };
    let uniform;
    let (miss_mean_h, miss_max_h, miss_probs, warning) = match class.miss.as_ref() {
        Some(miss) => (
            miss.mean_entropy,
            miss.max_entropy,
            miss.mean_probs.as_slice(),
            None,
        ),
        None => {
            uniform = vec![T::one() / T::from_count(n); n];
            (
                hit.mean_entropy,
                hit.max_entropy,
                uniform.as_slice(),
                Some(DecisionWarning::MissGroupSubstituted),
            )
        }
    };

    let step3 = h > hit.mean_entropy && h > miss_mean_h;
    let step4 = step3 && h > (hit.max_entropy + miss_max_h) / T::lit(2.0);
    let entropy_stage = match (step3, step4) {
        (true, true) => DecisionStage::PassedStep4,
        (true, false) => DecisionStage::PassedStep3,
        _ => DecisionStage::PassedNone,
    };

    let needs_similarity = match mode {
        Step5Mode::Conjunctive => step4,
        Step5Mode::Standalone => true,
    };
    if !needs_similarity {
        return Ok(lesion(entropy_stage, warning));
    }
    let sim_miss = cosine_similarity(miss_probs, probs)?;
    let sim_hit = cosine_similarity(&hit.mean_probs, probs)?;
    if sim_miss > sim_hit {
        Ok(OutlierDecision {
            stage_reached: DecisionStage::FlaggedUnknown,
            is_unknown: true,
            ..lesion(entropy_stage, warning)
        })
    } else {
        Ok(lesion(entropy_stage, warning))
    }
}

/// Outlier tally for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub total: usize,
    pub outliers: usize,
    /// `100 · outliers / total`, truncated to two decimals.
    pub percentage: f64,
    pub unfittable: usize,
}

impl OutlierSummary {
    pub fn from_counts(total: usize, outliers: usize, unfittable: usize) -> Self {
        // Integer arithmetic keeps the truncation exact.
        let hundredths = if total == 0 {
            0.0
        } else {
            (outliers as u128 * 10_000 / total as u128) as f64
        };
        Self {
            total,
            outliers,
            percentage: hundredths / 100.0,
            unfittable,
        }
    }
}

/// Runs [`detect_unknown`] over a batch.
pub fn flag_outliers<T: Scalar>(
    records: &[ProbabilityRecord<T>],
    profile: &EntropyProfile<T>,
    mode: Step5Mode,
) -> Result<(Vec<OutlierDecision<T>>, OutlierSummary), OpenSetError> {
    let decisions = records
        .iter()
        .map(|r| detect_unknown(r, profile, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let outliers = decisions.iter().filter(|d| d.is_unknown).count();
    let unfittable = decisions
        .iter()
        .filter(|d| d.warning == Some(DecisionWarning::UnfittableClass))
        .count();
    let summary = OutlierSummary::from_counts(decisions.len(), outliers, unfittable);
    Ok((decisions, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::ProbabilityVector;

    fn labeled(id: &str, p: &[f64], label: usize) -> LabeledRecord<f64> {
        LabeledRecord::new(
            id,
            ProbabilityVector::new(p.to_vec(), p.len()).unwrap(),
            label,
        )
        .unwrap()
    }

    fn record(id: &str, p: &[f64]) -> ProbabilityRecord<f64> {
        ProbabilityRecord::new(id, ProbabilityVector::new(p.to_vec(), p.len()).unwrap()).unwrap()
    }

    fn group(mean: f64, max: f64, probs: &[f64]) -> GroupStats<f64> {
        GroupStats {
            count: 1,
            mean_entropy: mean,
            max_entropy: max,
            mean_probs: probs.to_vec(),
        }
    }

    fn two_class_profile(hit: GroupStats<f64>, miss: GroupStats<f64>) -> EntropyProfile<f64> {
        let unfit = ClassProfile {
            hit: None,
            miss: None,
        };
        EntropyProfile::from_classes(vec![
            ClassProfile {
                hit: Some(hit),
                miss: Some(miss),
            },
            unfit,
        ])
    }

    #[test]
    fn empty_validation_is_rejected() {
        assert_eq!(
            fit_entropy_profile::<f64>(&[]),
            Err(OpenSetError::EmptyValidationSet)
        );
    }

    #[test]
    fn one_hot_correct_predictions_have_zero_entropy_hits() {
        let validation = vec![
            labeled("a", &[1.0, 0.0, 0.0], 0),
            labeled("b", &[0.0, 1.0, 0.0], 1),
            labeled("c", &[1.0, 0.0, 0.0], 0),
        ];
        let profile = fit_entropy_profile(&validation).unwrap();
        for c in 0..2 {
            let class = profile.class(c).unwrap();
            let hit = class.hit.as_ref().unwrap();
            assert_eq!(hit.mean_entropy, 0.0);
            assert_eq!(hit.max_entropy, 0.0);
            assert!(class.miss.is_none());
        }
        assert_eq!(profile.class(0).unwrap().hit_count(), 2);
        let never_predicted = profile.class(2).unwrap();
        assert_eq!(never_predicted.hit_count(), 0);
        assert_eq!(never_predicted.miss_count(), 0);
        assert!(!never_predicted.is_fittable());
    }

    #[test]
    fn six_record_two_class_groups() {
        // Class A (index 0): hits at 0.9/0.1 and 0.7/0.3, miss at 0.6/0.4.
        // Class B (index 1): hits at 0.2/0.8 and 0.1/0.9, miss at 0.45/0.55.
        let validation = vec![
            labeled("1", &[0.9, 0.1], 0),
            labeled("2", &[0.7, 0.3], 0),
            labeled("3", &[0.6, 0.4], 1),
            labeled("4", &[0.2, 0.8], 1),
            labeled("5", &[0.1, 0.9], 1),
            labeled("6", &[0.45, 0.55], 0),
        ];
        let h = |p: f64| -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        let profile = fit_entropy_profile(&validation).unwrap();

        let a = profile.class(0).unwrap();
        let a_hit = a.hit.as_ref().unwrap();
        assert_eq!(a_hit.count, 2);
        assert!((a_hit.mean_entropy - (h(0.9) + h(0.7)) / 2.0).abs() < 1e-15);
        assert_eq!(a_hit.max_entropy, h(0.7).max(h(0.9)));
        assert!((a_hit.mean_probs[0] - 0.8).abs() < 1e-15);
        let a_miss = a.miss.as_ref().unwrap();
        assert_eq!(a_miss.count, 1);
        assert!((a_miss.mean_entropy - h(0.6)).abs() < 1e-15);

        let b = profile.class(1).unwrap();
        assert_eq!(b.hit_count(), 2);
        assert_eq!(b.miss_count(), 1);
        assert!((b.miss.as_ref().unwrap().mean_probs[1] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn one_hot_record_is_a_lesion() {
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        let d =
            detect_unknown(&record("s", &[1.0, 0.0]), &profile, Step5Mode::Conjunctive).unwrap();
        assert_eq!(d.entropy_bits, 0.0);
        assert_eq!(d.stage_reached, DecisionStage::PassedNone);
        assert!(!d.is_unknown);
    }

    #[test]
    fn hand_walk_step4_fails() {
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        let d = detect_unknown(
            &record("s", &[0.55, 0.45]),
            &profile,
            Step5Mode::Conjunctive,
        )
        .unwrap();
        assert!((d.entropy_bits - 0.992_774_453_987_808_4).abs() < 1e-12);
        assert_eq!(d.stage_reached, DecisionStage::PassedStep3);
        assert!(!d.is_unknown);

        let d = detect_unknown(
            &record("s", &[0.51, 0.49]),
            &profile,
            Step5Mode::Conjunctive,
        )
        .unwrap();
        assert!((d.entropy_bits - 0.999_711_441_752_809_9).abs() < 1e-12);
        assert_eq!(d.stage_reached, DecisionStage::PassedStep3);
        assert!(!d.is_unknown);
    }

    #[test]
    fn hand_walk_flagged_by_similarity() {
        let profile = two_class_profile(group(0.3, 0.4, &[0.9, 0.1]), group(0.5, 0.5, &[0.5, 0.5]));
        let d =
            detect_unknown(&record("s", &[0.5, 0.5]), &profile, Step5Mode::Conjunctive).unwrap();
        assert_eq!(d.entropy_bits, 1.0);
        assert_eq!(d.predicted_label, 0);
        assert_eq!(d.stage_reached, DecisionStage::FlaggedUnknown);
        assert!(d.is_unknown);

        // Swap the mean vectors: now the record sits closer to the hit mean.
        let profile = two_class_profile(group(0.3, 0.4, &[0.5, 0.5]), group(0.5, 0.5, &[0.9, 0.1]));
        let d =
            detect_unknown(&record("s", &[0.5, 0.5]), &profile, Step5Mode::Conjunctive).unwrap();
        assert_eq!(d.stage_reached, DecisionStage::PassedStep4);
        assert!(!d.is_unknown);
    }

    #[test]
    fn standalone_mode_uses_similarity_only() {
        // Entropy tests fail (h below the means) but the record is closer to
        // the miss mean.
        let profile = two_class_profile(
            group(0.99, 1.0, &[0.95, 0.05]),
            group(0.99, 1.0, &[0.6, 0.4]),
        );
        let r = record("s", &[0.6, 0.4]);
        let conj = detect_unknown(&r, &profile, Step5Mode::Conjunctive).unwrap();
        assert!(!conj.is_unknown);
        let alone = detect_unknown(&r, &profile, Step5Mode::Standalone).unwrap();
        assert!(alone.is_unknown);
        assert_eq!(alone.stage_reached, DecisionStage::FlaggedUnknown);
    }

    #[test]
    fn unfittable_class_falls_back_to_lesion() {
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        let d = detect_unknown(
            &record("s", &[0.45, 0.55]),
            &profile,
            Step5Mode::Conjunctive,
        )
        .unwrap();
        assert_eq!(d.predicted_label, 1);
        assert!(!d.is_unknown);
        assert_eq!(d.warning, Some(DecisionWarning::UnfittableClass));
    }

    #[test]
    fn empty_miss_group_uses_hit_stats_and_uniform() {
        let profile = EntropyProfile::from_classes(vec![
            ClassProfile {
                hit: Some(group(0.2, 0.6, &[0.95, 0.05])),
                miss: None,
            },
            ClassProfile {
                hit: None,
                miss: None,
            },
        ]);
        let d = detect_unknown(
            &record("s", &[0.52, 0.48]),
            &profile,
            Step5Mode::Conjunctive,
        )
        .unwrap();
        assert!(d.is_unknown);
        assert_eq!(d.warning, Some(DecisionWarning::MissGroupSubstituted));

        let d =
            detect_unknown(&record("s", &[0.9, 0.1]), &profile, Step5Mode::Conjunctive).unwrap();
        assert!(!d.is_unknown);
    }

    #[test]
    fn class_count_mismatch() {
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        assert!(matches!(
            detect_unknown(
                &record("s", &[0.2, 0.3, 0.5]),
                &profile,
                Step5Mode::Conjunctive
            ),
            Err(OpenSetError::ClassCountMismatch { .. })
        ));
    }

    #[test]
    fn summary_percentages() {
        assert_eq!(OutlierSummary::from_counts(0, 0, 0).percentage, 0.0);
        assert_eq!(OutlierSummary::from_counts(100, 7, 0).percentage, 7.0);
        // Two-decimal truncation: 944 / 8239 = 11.4577..., 579 / 8239 = 7.0275...
        assert_eq!(OutlierSummary::from_counts(8239, 944, 0).percentage, 11.45);
        assert_eq!(OutlierSummary::from_counts(8239, 579, 0).percentage, 7.02);
    }

    #[test]
    fn empty_batch() {
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        let (decisions, summary) = flag_outliers(&[], &profile, Step5Mode::Conjunctive).unwrap();
        assert!(decisions.is_empty());
        assert_eq!(summary.outliers, 0);
        assert_eq!(summary.percentage, 0.0);
    }

    #[test]
    fn document_round_trip_and_validation() {
        let taxonomy = ClassTaxonomy::new(["A", "B"], "U").unwrap();
        let profile = two_class_profile(group(0.3, 1.0, &[0.9, 0.1]), group(0.5, 2.0, &[0.5, 0.5]));
        let json = serde_json::to_string(&profile.to_document(&taxonomy)).unwrap();
        assert!(json.contains("\"A\""));
        let doc: ProfileDocument<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(
            EntropyProfile::from_document(doc, &taxonomy).unwrap(),
            profile
        );

        let other = ClassTaxonomy::new(["A", "C"], "U").unwrap();
        let doc: ProfileDocument<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(
            EntropyProfile::from_document(doc, &other),
            Err(OpenSetError::UnknownLabel("B".into()))
        );

        let mut doc: ProfileDocument<f64> = serde_json::from_str(&json).unwrap();
        doc.classes[0].hit.as_mut().unwrap().mean_entropy = 5.0;
        assert_eq!(
            EntropyProfile::from_document(doc, &taxonomy),
            Err(OpenSetError::InvalidGroup("A".into()))
        );
    }
}

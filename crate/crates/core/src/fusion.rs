//! Metadata prior fusion.
//!
//! Class priors conditioned on (age bin, sex) and (anatomical region, sex)
//! are estimated by histogram counting over training records that carry all
//! three metadata fields. At inference, a low-confidence prediction has the
//! mean of its age and region priors added to each of its top two scores,
//! and the second class wins if its boosted score is strictly higher.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::taxonomy::{argmax, LabeledRecord, ProbabilityRecord, TaxonomyError};

/// Default age histogram bin width in years.
pub const DEFAULT_AGE_BIN_WIDTH: f64 = 10.0;
/// Ages are binned over `[0, AGE_RANGE_END)`; older ages land in the last bin.
pub const AGE_RANGE_END: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no training record has age, sex and region all present")]
    NoCompleteRecords,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("age bin width must be positive and finite")]
    InvalidBinWidth,
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("tables are fitted for {fitted} classes, record `{sample_id}` has {found}")]
    UnfittedTables {
        sample_id: String,
        fitted: usize,
        found: usize,
    },
    #[error("metadata for sample `{0}` appears more than once")]
    DuplicateMetadataRow(String),
    #[error("invalid prior table: {0}")]
    InvalidTable(String),
    #[error(transparent)]
    Vector(#[from] TaxonomyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl std::str::FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" => Ok(Self::Female),
            "male" => Ok(Self::Male),
            other => Err(format!("unknown sex `{other}`")),
        }
    }
}

impl std::fmt::Display for Sex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Female => "female",
            Self::Male => "male",
        })
    }
}

/// Patient metadata for one sample; every field may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord<T> {
    pub sample_id: String,
    /// Years.
    pub age: Option<T>,
    pub sex: Option<Sex>,
    /// Anatomical site, as written in the source file.
    pub region: Option<String>,
}

impl<T: Scalar> MetadataRecord<T> {
    pub fn missing(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            age: None,
            sex: None,
            region: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.age.is_some() && self.sex.is_some() && self.normalized_region().is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.age.is_none() && self.sex.is_none() && self.normalized_region().is_none()
    }

    /// Region lower-cased and trimmed; blank strings count as missing.
    pub fn normalized_region(&self) -> Option<String> {
        self.region
            .as_deref()
            .map(normalize_region)
            .filter(|r| !r.is_empty())
    }
}

pub fn normalize_region(region: &str) -> String {
    region.trim().to_lowercase()
}

/// Class distributions for each value of one conditioning variable.
///
/// `columns[k][c]` is `p(class c | condition k)`. Conditions without
/// training samples hold an all-zero column and `support[k] == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable<T> {
    pub columns: Vec<Vec<T>>,
    pub support: Vec<usize>,
}

impl<T: Scalar> ConditionalTable<T> {
    fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let support: Vec<usize> = counts.iter().map(|col| col.iter().sum()).collect();
        let columns = counts
            .into_iter()
            .zip(&support)
            .map(|(col, &total)| {
                col.into_iter()
                    .map(|n| {
                        if total == 0 {
                            T::zero()
                        } else {
                            T::from_count(n) / T::from_count(total)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { columns, support }
    }

    /// `p(class | condition)`, zero for empty or out-of-range conditions.
    pub fn prob(&self, condition: usize, class: usize) -> T {
        self.columns
            .get(condition)
            .and_then(|col| col.get(class))
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn is_empty_condition(&self, condition: usize) -> bool {
        self.support.get(condition).is_none_or(|&n| n == 0)
    }
}

/// Fixed-width age histogram over `[0, AGE_RANGE_END)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBinning<T> {
    pub width: T,
}

impl<T: Scalar> AgeBinning<T> {
    pub fn new(width: T) -> Result<Self, FusionError> {
        if !(width.is_finite() && width > T::zero()) {
            return Err(FusionError::InvalidBinWidth);
        }
        Ok(Self { width })
    }

    pub fn n_bins(&self) -> usize {
        (T::lit(AGE_RANGE_END) / self.width)
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1)
    }

    /// Bin index for `age`; ages at or beyond the range end use the last bin.
    pub fn bin(&self, age: T) -> usize {
        let raw = (age.max(T::zero()) / self.width)
            .floor()
            .to_usize()
            .unwrap_or(usize::MAX);
        raw.min(self.n_bins() - 1)
    }

    /// `[low, high)` edges of every bin.
    pub fn edges(&self) -> Vec<(T, T)> {
        (0..self.n_bins())
            .map(|i| {
                let low = self.width * T::from_count(i);
                let high = (low + self.width).min(T::lit(AGE_RANGE_END));
                (low, high)
            })
            .collect()
    }
}

impl<T: Scalar> Default for AgeBinning<T> {
    fn default() -> Self {
        Self {
            width: T::lit(DEFAULT_AGE_BIN_WIDTH),
        }
    }
}

/// Histogram priors for both sexes over age bins and regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable<T> {
    pub n_classes: usize,
    pub age_binning: AgeBinning<T>,
    pub age_bins: Vec<(T, T)>,
    pub region_vocabulary: Vec<String>,
    pub female_age: ConditionalTable<T>,
    pub male_age: ConditionalTable<T>,
    pub female_region: ConditionalTable<T>,
    pub male_region: ConditionalTable<T>,
    /// Training records skipped because a field was missing.
    pub excluded_records: usize,
}

impl<T: Scalar> PriorTable<T> {
    fn age_table(&self, sex: Sex) -> &ConditionalTable<T> {
        match sex {
            Sex::Female => &self.female_age,
            Sex::Male => &self.male_age,
        }
    }

    fn region_table(&self, sex: Sex) -> &ConditionalTable<T> {
        match sex {
            Sex::Female => &self.female_region,
            Sex::Male => &self.male_region,
        }
    }

    pub fn region_index(&self, region: &str) -> Option<usize> {
        self.region_vocabulary
            .binary_search_by(|v| v.as_str().cmp(region))
            .ok()
    }

    /// Age prior of `class` for a patient of the given sex and age.
    pub fn age_prior(&self, sex: Sex, age: T, class: usize) -> T {
        self.age_table(sex).prob(self.age_binning.bin(age), class)
    }

    /// Region prior of `class`; zero for regions never seen in training.
    pub fn region_prior(&self, sex: Sex, region: &str, class: usize) -> T {
        self.region_index(&normalize_region(region))
            .map_or_else(T::zero, |k| self.region_table(sex).prob(k, class))
    }

    /// Structural checks used after deserialization.
    pub fn check(&self) -> Result<(), FusionError> {
        let n_bins = self.age_binning.n_bins();
        let n_regions = self.region_vocabulary.len();
        if self.age_bins.len() != n_bins {
            return Err(FusionError::InvalidTable("age bin count".into()));
        }
        if !self.region_vocabulary.windows(2).all(|w| w[0] < w[1]) {
            return Err(FusionError::InvalidTable(
                "region vocabulary not sorted".into(),
            ));
        }
        let tables = [
            (&self.female_age, n_bins),
            (&self.male_age, n_bins),
            (&self.female_region, n_regions),
            (&self.male_region, n_regions),
        ];
        for (table, n_conditions) in tables {
            if table.columns.len() != n_conditions || table.support.len() != n_conditions {
                return Err(FusionError::InvalidTable("condition count".into()));
            }
            if table.columns.iter().any(|col| col.len() != self.n_classes) {
                return Err(FusionError::InvalidTable("class count".into()));
            }
        }
        Ok(())
    }
}

/// Estimates the four prior tables from complete training records.
pub fn fit_priors<T: Scalar>(
    training: &[(MetadataRecord<T>, usize)],
    n_classes: usize,
    binning: AgeBinning<T>,
) -> Result<PriorTable<T>, FusionError> {
    if training.is_empty() {
        return Err(FusionError::EmptyTrainingSet);
    }
    if let Some((_, label)) = training.iter().find(|(_, l)| *l >= n_classes) {
        return Err(FusionError::LabelOutOfRange {
            label: *label,
            n_classes,
        });
    }
    let complete: Vec<(T, Sex, String, usize)> = training
        .iter()
        .filter_map(|(meta, label)| Some((meta.age?, meta.sex?, meta.normalized_region()?, *label)))
        .collect();
    if complete.is_empty() {
        return Err(FusionError::NoCompleteRecords);
    }

    let vocabulary: Vec<String> = complete
        .iter()
        .map(|(_, _, r, _)| r.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let region_index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();

    let n_bins = binning.n_bins();
    let zeros = |n_conditions: usize| vec![vec![0usize; n_classes]; n_conditions];
    let mut age_counts = [zeros(n_bins), zeros(n_bins)];
    let mut region_counts = [zeros(vocabulary.len()), zeros(vocabulary.len())];
    for (age, sex, region, label) in &complete {
        let s = *sex as usize;
        age_counts[s][binning.bin(*age)][*label] += 1;
        region_counts[s][region_index[region.as_str()]][*label] += 1;
    }
    let [female_age, male_age] = age_counts.map(ConditionalTable::from_counts);
    let [female_region, male_region] = region_counts.map(ConditionalTable::from_counts);

    Ok(PriorTable {
        n_classes,
        age_binning: binning,
        age_bins: binning.edges(),
        region_vocabulary: vocabulary,
        female_age,
        male_age,
        female_region,
        male_region,
        excluded_records: training.len() - complete.len(),
    })
}

/// Which validation records define the per-class confidence level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceKey {
    /// Mean top-1 probability over records predicted as the class.
    #[default]
    Predicted,
    /// Mean probability of the class over records whose true label is the class.
    True,
}

impl std::str::FromStr for ConfidenceKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predicted" => Ok(Self::Predicted),
            "true" => Ok(Self::True),
            other => Err(format!("unknown confidence key `{other}`")),
        }
    }
}

/// Per-class mean confidence, the gate for metadata fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeanConfidence<T> {
    pub key: ConfidenceKey,
    /// `None` where no validation record contributed.
    pub mean_top_prob: Vec<Option<T>>,
    pub support: Vec<usize>,
}

impl<T: Scalar> ClassMeanConfidence<T> {
    pub fn n_classes(&self) -> usize {
        self.mean_top_prob.len()
    }

    pub fn get(&self, class: usize) -> Option<T> {
        self.mean_top_prob.get(class).copied().flatten()
    }
}

pub fn fit_mean_confidence<T: Scalar>(
    validation: &[LabeledRecord<T>],
    key: ConfidenceKey,
) -> Result<ClassMeanConfidence<T>, FusionError> {
    let n = validation
        .first()
        .ok_or(FusionError::EmptyValidationSet)?
        .probs
        .len();
    let mut sums = vec![T::zero(); n];
    let mut support = vec![0usize; n];
    for record in validation {
        let probs = record.probs.as_slice();
        if probs.len() != n {
            return Err(TaxonomyError::LengthMismatch {
                expected: n,
                found: probs.len(),
            }
            .into());
        }
        let (class, value) = match key {
            ConfidenceKey::Predicted => {
                let c = argmax(probs);
                (c, probs[c])
            }
            ConfidenceKey::True => (record.true_label, probs[record.true_label]),
        };
        sums[class] = sums[class] + value;
        support[class] += 1;
    }
    let mean_top_prob = sums
        .into_iter()
        .zip(&support)
        .map(|(s, &k)| (k > 0).then(|| s / T::from_count(k)))
        .collect();
    Ok(ClassMeanConfidence {
        key,
        mean_top_prob,
        support,
    })
}

/// Why fusion left a record untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Top-1 probability at or above the class's mean confidence.
    Confident,
    /// The predicted class never appeared in validation.
    NoConfidenceReference,
    /// No metadata at all.
    NoMetadata,
    /// All priors are sex-conditioned.
    MissingSex,
    /// Sex present but neither age nor region is usable.
    NoUsablePrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult<T> {
    pub sample_id: String,
    pub original_label: usize,
    pub second_label: usize,
    pub final_label: usize,
    /// Top-1 and top-2 scores after boosting; unboosted when not applied.
    pub scores: (T, T),
    pub applied: bool,
    pub skipped: Option<SkipReason>,
}

impl<T> FusionResult<T> {
    pub fn flipped(&self) -> bool {
        self.final_label != self.original_label
    }
}

/// Re-ranks one record's top two classes with metadata priors.
pub fn fuse<T: Scalar>(
    record: &ProbabilityRecord<T>,
    meta: &MetadataRecord<T>,
    priors: &PriorTable<T>,
    conf: &ClassMeanConfidence<T>,
) -> Result<FusionResult<T>, FusionError> {
    let n = record.probs.len();
    if priors.n_classes != n || conf.n_classes() != n {
        return Err(FusionError::UnfittedTables {
            sample_id: record.sample_id.clone(),
            fitted: if priors.n_classes != n {
                priors.n_classes
            } else {
                conf.n_classes()
            },
            found: n,
        });
    }
    let top = record.probs.top_k(2)?;
    let ((c1, p1), (c2, p2)) = (top[0], top[1]);
    let unchanged = |reason| FusionResult {
        sample_id: record.sample_id.clone(),
        original_label: c1,
        second_label: c2,
        final_label: c1,
        scores: (p1, p2),
        applied: false,
        skipped: Some(reason),
    };

    let Some(reference) = conf.get(c1) else {
        return Ok(unchanged(SkipReason::NoConfidenceReference));
    };
    if p1 >= reference {
        return Ok(unchanged(SkipReason::Confident));
    }
    if meta.is_empty() {
        return Ok(unchanged(SkipReason::NoMetadata));
    }
    let Some(sex) = meta.sex else {
        return Ok(unchanged(SkipReason::MissingSex));
    };
    let region = meta
        .normalized_region()
        .filter(|r| priors.region_index(r).is_some());
    if meta.age.is_none() && region.is_none() {
        return Ok(unchanged(SkipReason::NoUsablePrior));
    }

    // A missing term contributes zero and the divisor stays two.
    let boost = |class: usize| {
        let age_term = meta
            .age
            .map_or_else(T::zero, |age| priors.age_prior(sex, age, class));
        let region_term = region
            .as_deref()
            .map_or_else(T::zero, |r| priors.region_prior(sex, r, class));
        (age_term + region_term) / T::lit(2.0)
    };
    let s1 = p1 + boost(c1);
    let s2 = p2 + boost(c2);
    Ok(FusionResult {
        sample_id: record.sample_id.clone(),
        original_label: c1,
        second_label: c2,
        final_label: if s2 > s1 { c2 } else { c1 },
        scores: (s1, s2),
        applied: true,
        skipped: None,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionSummary {
    pub total: usize,
    pub applied: usize,
    pub flipped: usize,
}

/// Fuses every record, joining metadata by `sample_id`; output ordered by id.
pub fn fuse_batch<T: Scalar>(
    records: &[ProbabilityRecord<T>],
    metadata: &[MetadataRecord<T>],
    priors: &PriorTable<T>,
    conf: &ClassMeanConfidence<T>,
) -> Result<(Vec<FusionResult<T>>, FusionSummary), FusionError> {
    let mut by_id: HashMap<&str, &MetadataRecord<T>> = HashMap::with_capacity(metadata.len());
    for meta in metadata {
        if by_id.insert(meta.sample_id.as_str(), meta).is_some() {
            return Err(FusionError::DuplicateMetadataRow(meta.sample_id.clone()));
        }
    }
    let ordered: BTreeMap<&str, &ProbabilityRecord<T>> =
        records.iter().map(|r| (r.sample_id.as_str(), r)).collect();

    let mut summary = FusionSummary::default();
    let mut results = Vec::with_capacity(ordered.len());
    for (id, record) in ordered {
        let missing;
        let meta = match by_id.get(id) {
            Some(m) => *m,
            None => {
                missing = MetadataRecord::missing(id);
                &missing
            }
        };
        let result = fuse(record, meta, priors, conf)?;
        summary.total += 1;
        summary.applied += usize::from(result.applied);
        summary.flipped += usize::from(result.flipped());
        results.push(result);
    }
    Ok((results, summary))
}

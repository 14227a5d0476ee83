//! Combining several models' probability matrices into one.
//!
//! Members are aligned by `sample_id`, never by row position, and every
//! output is ordered by ascending `sample_id`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{order_free_sum, Scalar};
use crate::taxonomy::{ProbabilityRecord, ProbabilityVector, TaxonomyError, DEFAULT_SUM_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("ensemble has no members")]
    NoMembers,
    #[error("member `{member}` does not cover the same samples as `{reference}`")]
    MemberSampleMismatch { member: String, reference: String },
    #[error("member `{member}` lists sample `{sample_id}` more than once")]
    DuplicateSample { member: String, sample_id: String },
    #[error("member `{member}` has {found} classes, expected {expected}")]
    ClassCountMismatch {
        member: String,
        expected: usize,
        found: usize,
    },
    #[error("cannot select {n} of {available} members")]
    NOutOfRange { n: usize, available: usize },
    #[error("score for member `{0}` is not finite")]
    NonFiniteScore(String),
    #[error(transparent)]
    Vector(#[from] TaxonomyError),
}

/// Aggregation rule applied across ensemble members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationRule {
    Average,
    Majority,
    #[serde(rename = "maxprob")]
    MaxProb,
}

impl std::str::FromStr for AggregationRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(Self::Average),
            "majority" => Ok(Self::Majority),
            "maxprob" => Ok(Self::MaxProb),
            other => Err(format!("unknown aggregation rule `{other}`")),
        }
    }
}

impl std::fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Average => "average",
            Self::Majority => "majority",
            Self::MaxProb => "maxprob",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember<T: Scalar> {
    pub name: String,
    pub records: Vec<ProbabilityRecord<T>>,
}

impl<T: Scalar> EnsembleMember<T> {
    pub fn new(name: impl Into<String>, records: Vec<ProbabilityRecord<T>>) -> Self {
        Self {
            name: name.into(),
            records,
        }
    }
}

/// Per-model probability matrices, validated to cover identical samples.
#[derive(Debug, Clone)]
pub struct EnsembleInput<T: Scalar> {
    members: Vec<EnsembleMember<T>>,
    /// sample_id -> row index, one map per member.
    index: Vec<HashMap<String, usize>>,
    sample_ids: Vec<String>,
}

impl<T: Scalar> EnsembleInput<T> {
    pub fn new(members: Vec<EnsembleMember<T>>) -> Result<Self, EnsembleError> {
        let first = members.first().ok_or(EnsembleError::NoMembers)?;
        let n_classes = first.records.first().map(|r| r.probs.len());

        let mut index = Vec::with_capacity(members.len());
        for member in &members {
            let mut rows = HashMap::with_capacity(member.records.len());
            for (row, record) in member.records.iter().enumerate() {
                if let Some(expected) = n_classes {
                    if record.probs.len() != expected {
                        return Err(EnsembleError::ClassCountMismatch {
                            member: member.name.clone(),
                            expected,
                            found: record.probs.len(),
                        });
                    }
                }
                if rows.insert(record.sample_id.clone(), row).is_some() {
                    return Err(EnsembleError::DuplicateSample {
                        member: member.name.clone(),
                        sample_id: record.sample_id.clone(),
                    });
                }
            }
            index.push(rows);
        }

        let reference: HashSet<&String> = index[0].keys().collect();
        for (member, rows) in members.iter().zip(&index).skip(1) {
            if rows.len() != reference.len() || !rows.keys().all(|id| reference.contains(id)) {
                return Err(EnsembleError::MemberSampleMismatch {
                    member: member.name.clone(),
                    reference: first.name.clone(),
                });
            }
        }

        let mut sample_ids: Vec<String> = index[0].keys().cloned().collect();
        sample_ids.sort();
        Ok(Self {
            members,
            index,
            sample_ids,
        })
    }

    pub fn members(&self) -> &[EnsembleMember<T>] {
        &self.members
    }

    /// Sample ids in ascending order.
    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Every member's vector for `sample_id`, in member order.
    fn vectors_for<'a>(
        &'a self,
        sample_id: &'a str,
    ) -> impl Iterator<Item = &'a ProbabilityVector<T>> + 'a {
        self.members
            .iter()
            .zip(&self.index)
            .map(move |(member, rows)| &member.records[rows[sample_id]].probs)
    }
}

/// Per-class arithmetic mean over members.
///
/// Each class's member values are summed in sorted order, so the result is
/// bit-for-bit independent of member order.
pub fn aggregate_average<T: Scalar>(
    input: &EnsembleInput<T>,
) -> Result<Vec<ProbabilityRecord<T>>, EnsembleError> {
    let n_members = T::from_count(input.members.len());
    input
        .sample_ids
        .iter()
        .map(|id| {
            let vectors: Vec<&ProbabilityVector<T>> = input.vectors_for(id).collect();
            let n_classes = vectors[0].len();
            let mut column = Vec::with_capacity(vectors.len());
            let mean = (0..n_classes)
                .map(|c| {
                    column.clear();
                    column.extend(vectors.iter().map(|v| v.as_slice()[c]));
                    let mean = order_free_sum(&mut column) / n_members;
                    // column is sorted now; keep the mean inside the member range
                    mean.max(column[0]).min(column[column.len() - 1])
                })
                .collect();
            let probs =
                ProbabilityVector::validate(mean, n_classes, T::lit(DEFAULT_SUM_TOLERANCE))?;
            Ok(ProbabilityRecord::new(id.clone(), probs)?)
        })
        .collect()
}

/// Outcome of a majority vote for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityVote {
    pub sample_id: String,
    pub label: usize,
    pub votes: usize,
}

/// Each member votes for its argmax; most votes wins, lowest index on ties.
pub fn aggregate_majority<T: Scalar>(input: &EnsembleInput<T>) -> Vec<MajorityVote> {
    input
        .sample_ids
        .iter()
        .map(|id| {
            let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
            for v in input.vectors_for(id) {
                *tally.entry(v.argmax()).or_default() += 1;
            }
            // BTreeMap iterates by ascending label; keep the first maximum.
            let (label, votes) =
                tally.into_iter().fold(
                    (0, 0),
                    |best, (label, votes)| {
                        if votes > best.1 {
                            (label, votes)
                        } else {
                            best
                        }
                    },
                );
            MajorityVote {
                sample_id: id.clone(),
                label,
                votes,
            }
        })
        .collect()
}

/// Copies through the member whose largest entry is highest; first member on ties.
pub fn aggregate_max_prob<T: Scalar>(input: &EnsembleInput<T>) -> Vec<ProbabilityRecord<T>> {
    input
        .sample_ids
        .iter()
        .map(|id| {
            let mut best: Option<(&ProbabilityVector<T>, T)> = None;
            for v in input.vectors_for(id) {
                let peak = v.as_slice().iter().copied().fold(T::neg_infinity(), T::max);
                match best {
                    Some((_, top)) if peak <= top => {}
                    _ => best = Some((v, peak)),
                }
            }
            let (probs, _) = best.expect("ensemble has at least one member");
            ProbabilityRecord {
                sample_id: id.clone(),
                probs: probs.clone(),
            }
        })
        .collect()
}

/// Names of the `n` highest-scoring members, best first; ties by name.
pub fn select_best_members<T: Scalar>(
    scores: &[(String, T)],
    n: usize,
) -> Result<Vec<String>, EnsembleError> {
    if n == 0 || n > scores.len() {
        return Err(EnsembleError::NOutOfRange {
            n,
            available: scores.len(),
        });
    }
    if let Some((name, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(EnsembleError::NonFiniteScore(name.clone()));
    }
    let mut ranked: Vec<&(String, T)> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(name, _)| name.clone())
        .collect())
}

//! Decision engine that turns per-model class-probability matrices into
//! open-set skin-lesion diagnoses.
//!
//! The pipeline is
//!
//! 1. [`ensemble`]: combine several models' outputs (average, majority vote
//!    or maximum probability);
//! 2. [`openset`]: reject unknown-class samples using per-class entropy and
//!    cosine-similarity statistics fitted on validation data;
//! 3. [`fusion`]: re-rank low-confidence predictions with age/sex/region
//!    histogram priors;
//! 4. [`metrics`]: score the result.
//!
//! Every routine is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the file formats use.

pub mod ensemble;
pub mod entropy;
pub mod fusion;
pub mod metrics;
pub mod openset;
pub mod scalar;
pub mod taxonomy;

pub use ensemble::{
    aggregate_average, aggregate_majority, aggregate_max_prob, select_best_members,
    AggregationRule, EnsembleError, MajorityVote,
};
pub use entropy::{cosine_similarity, shannon_entropy, SimilarityError};
pub use fusion::{
    fit_mean_confidence, fit_priors, fuse, fuse_batch, ConfidenceKey, FusionError, FusionSummary,
    Sex, SkipReason,
};
pub use metrics::{
    accuracy, balanced_accuracy, class_weights, confusion_matrix, macro_auc, ConfusionMatrix,
    MetricsError,
};
pub use openset::{
    detect_unknown, fit_entropy_profile, flag_outliers, DecisionStage, DecisionWarning,
    OpenSetError, OutlierSummary, Step5Mode,
};
pub use scalar::Scalar;
pub use taxonomy::{top_k, ClassTaxonomy, TaxonomyError};

pub type ProbabilityVector = taxonomy::ProbabilityVector<f64>;
pub type ProbabilityRecord = taxonomy::ProbabilityRecord<f64>;
pub type LabeledRecord = taxonomy::LabeledRecord<f64>;
pub type EnsembleMember = ensemble::EnsembleMember<f64>;
pub type EnsembleInput = ensemble::EnsembleInput<f64>;
pub type EntropyProfile = openset::EntropyProfile<f64>;
pub type ClassProfile = openset::ClassProfile<f64>;
pub type GroupStats = openset::GroupStats<f64>;
pub type ProfileDocument = openset::ProfileDocument<f64>;
pub type OutlierDecision = openset::OutlierDecision<f64>;
pub type MetadataRecord = fusion::MetadataRecord<f64>;
pub type AgeBinning = fusion::AgeBinning<f64>;
pub type PriorTable = fusion::PriorTable<f64>;
pub type ConditionalTable = fusion::ConditionalTable<f64>;
pub type ClassMeanConfidence = fusion::ClassMeanConfidence<f64>;
pub type FusionResult = fusion::FusionResult<f64>;
pub type EvaluationReport = metrics::EvaluationReport<f64>;

//! One function per subcommand. `pipeline` calls the same functions, so its
//! outputs are byte-identical to running the steps by hand.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use lesion_core::{
    aggregate_average, aggregate_majority, aggregate_max_prob, class_weights, fit_entropy_profile,
    fit_mean_confidence, fit_priors, flag_outliers, fuse_batch, select_best_members, AgeBinning,
    AggregationRule, ClassMeanConfidence, ClassTaxonomy, ConfidenceKey, EnsembleInput,
    EnsembleMember, EntropyProfile, EvaluationReport, LabeledRecord, OutlierSummary, PriorTable,
    ProbabilityRecord, ProbabilityVector, ProfileDocument, Step5Mode,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{self, FusedRow, SubmissionRow, Truth};
use crate::synth::{self, SynthConfig, ISIC2019_COUNTS};

/// Submission files carry six decimals, so their rows are validated loosely.
pub const SUBMISSION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Args)]
pub struct TaxonomyArgs {
    /// Known labels in column order.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "MEL,NV,BCC,AK,BKL,DF,VASC,SCC"
    )]
    pub labels: Vec<String>,
    #[arg(long, default_value = "UNK")]
    pub unknown_label: String,
    /// Allowed deviation of a probability row sum from 1.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

impl Default for TaxonomyArgs {
    fn default() -> Self {
        Self {
            labels: ClassTaxonomy::isic2019().known_labels().to_vec(),
            unknown_label: lesion_core::taxonomy::UNKNOWN_LABEL.into(),
            tolerance: lesion_core::taxonomy::DEFAULT_SUM_TOLERANCE,
        }
    }
}

impl TaxonomyArgs {
    pub fn taxonomy(&self) -> Result<ClassTaxonomy> {
        Ok(ClassTaxonomy::new(
            self.labels.clone(),
            self.unknown_label.clone(),
        )?)
    }

    fn checked(&self) -> Result<ClassTaxonomy> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        self.taxonomy()
    }
}

fn member_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Pairs every record with its ground truth.
fn join_truth(
    records: Vec<ProbabilityRecord>,
    records_path: &Path,
    truth: &[(String, Truth)],
    truth_path: &Path,
) -> Result<Vec<(ProbabilityRecord, Truth)>> {
    let by_id: HashMap<&str, Truth> = truth.iter().map(|(id, t)| (id.as_str(), *t)).collect();
    records
        .into_iter()
        .map(|r| match by_id.get(r.sample_id.as_str()) {
            Some(t) => Ok((r, *t)),
            None => Err(Error::MissingSample {
                path: truth_path.to_path_buf(),
                sample_id: r.sample_id.clone(),
            }),
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|joined| {
            if joined.len() < truth.len() {
                let have: HashSet<&str> =
                    joined.iter().map(|(r, _)| r.sample_id.as_str()).collect();
                if let Some((id, _)) = truth.iter().find(|(id, _)| !have.contains(id.as_str())) {
                    return Err(Error::MissingSample {
                        path: records_path.to_path_buf(),
                        sample_id: id.clone(),
                    });
                }
            }
            Ok(joined)
        })
}

/// Like [`join_truth`] but every label must be a known class.
fn labeled_records(
    records: Vec<ProbabilityRecord>,
    records_path: &Path,
    truth: &[(String, Truth)],
    truth_path: &Path,
) -> Result<Vec<LabeledRecord>> {
    join_truth(records, records_path, truth, truth_path)?
        .into_iter()
        .map(|(r, t)| match t {
            Truth::Known(c) => Ok(LabeledRecord::new(r.sample_id, r.probs, c)?),
            Truth::Unknown => Err(Error::UnexpectedUnknown {
                path: truth_path.to_path_buf(),
                sample_id: r.sample_id,
            }),
        })
        .collect()
}

// ---------------------------------------------------------------- aggregate

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long, default_value = "average")]
    pub rule: AggregationRule,
    /// Output CSV: probabilities for `average`/`maxprob`, `image,label,votes` for `majority`.
    #[arg(long, short)]
    pub output: PathBuf,
    /// One probability CSV per ensemble member.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

pub fn aggregate(args: &AggregateArgs) -> Result<String> {
    let taxonomy = args.taxonomy.checked()?;
    let members = args
        .inputs
        .iter()
        .map(|p| {
            let records = io::read_probability_csv(p, &taxonomy, args.taxonomy.tolerance)?;
            Ok(EnsembleMember::new(member_name(p), records))
        })
        .collect::<Result<Vec<_>>>()?;
    let input = EnsembleInput::new(members)?;
    let samples = input.sample_ids().len();
    match args.rule {
        AggregationRule::Average => {
            io::write_probability_csv(&args.output, &taxonomy, &aggregate_average(&input)?)?
        }
        AggregationRule::MaxProb => {
            io::write_probability_csv(&args.output, &taxonomy, &aggregate_max_prob(&input))?
        }
        AggregationRule::Majority => {
            io::write_votes_csv(&args.output, &taxonomy, &aggregate_majority(&input))?
        }
    }
    Ok(format!(
        "aggregated {samples} samples from {} members ({})",
        args.inputs.len(),
        args.rule
    ))
}

// ----------------------------------------------------------- select-members

#[derive(Debug, Clone, Args)]
pub struct SelectMembersArgs {
    /// CSV with `model,balanced_accuracy` rows.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(short, long, default_value_t = 3)]
    pub n: usize,
    /// Also write the selected names, one per line.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn select_members(args: &SelectMembersArgs) -> Result<String> {
    let scores = io::read_scores_csv(&args.scores)?;
    let chosen = select_best_members(&scores, args.n)?;
    let mut text = chosen.join("\n");
    text.push('\n');
    if let Some(out) = &args.output {
        io::write_atomic(out, |w| w.write_all(text.as_bytes()))?;
    }
    Ok(text.trim_end().to_string())
}

// -------------------------------------------------------- calibrate-entropy

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    /// Validation probabilities (usually the ensemble output).
    #[arg(long)]
    pub probs: PathBuf,
    /// Validation ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output profile JSON.
    #[arg(long, short)]
    pub output: PathBuf,
}

pub fn calibrate_entropy(args: &CalibrateArgs) -> Result<String> {
    let taxonomy = args.taxonomy.checked()?;
    let records = io::read_probability_csv(&args.probs, &taxonomy, args.taxonomy.tolerance)?;
    let truth = io::read_truth_csv(&args.truth, &taxonomy)?;
    let validation = labeled_records(records, &args.probs, &truth, &args.truth)?;
    let profile = fit_entropy_profile(&validation)?;
    io::write_json(&args.output, &profile.to_document(&taxonomy))?;
    let fittable = profile.classes().iter().filter(|c| c.is_fittable()).count();
    Ok(format!(
        "fitted entropy profile on {} records; {fittable}/{} classes have a hit group",
        validation.len(),
        taxonomy.len()
    ))
}

fn load_profile(path: &Path, taxonomy: &ClassTaxonomy) -> Result<EntropyProfile> {
    let doc: ProfileDocument = io::read_json(path)?;
    Ok(EntropyProfile::from_document(doc, taxonomy)?)
}

// ----------------------------------------------------------- detect-unknown

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    /// Profile JSON from `calibrate-entropy`.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub probs: PathBuf,
    #[arg(long, default_value = "conjunctive")]
    pub mode: Step5Mode,
    /// Per-record decision trace.
    #[arg(long)]
    pub decisions: PathBuf,
    /// Optional open-set submission CSV.
    #[arg(long)]
    pub submission: Option<PathBuf>,
}

pub fn detect_unknown(args: &DetectArgs) -> Result<String> {
    let taxonomy = args.taxonomy.checked()?;
    let profile = load_profile(&args.profile, &taxonomy)?;
    let records = io::read_probability_csv(&args.probs, &taxonomy, args.taxonomy.tolerance)?;
    let (decisions, summary) = flag_outliers(&records, &profile, args.mode)?;
    io::write_decisions_csv(&args.decisions, &taxonomy, &decisions)?;
    if let Some(path) = &args.submission {
        let rows: Vec<SubmissionRow> = records
            .iter()
            .zip(&decisions)
            .map(|(r, d)| SubmissionRow::from_probs(&r.sample_id, &r.probs, d.is_unknown))
            .collect();
        io::write_submission_csv(path, &taxonomy, &rows)?;
    }
    Ok(format!(
        "{} of {} samples flagged unknown ({:.2}%); {} predicted into unfittable classes",
        summary.outliers, summary.total, summary.percentage, summary.unfittable
    ))
}

// --------------------------------------------------------------- fit-priors

/// Everything `fuse-meta` needs, stored as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataModel {
    pub taxonomy: ClassTaxonomy,
    pub priors: PriorTable,
    pub confidence: ClassMeanConfidence,
}

#[derive(Debug, Clone, Args)]
pub struct FitPriorsArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    /// Training metadata (ISIC columns).
    #[arg(long)]
    pub metadata: PathBuf,
    /// Training ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    /// Validation probabilities, for the per-class mean confidence.
    #[arg(long)]
    pub val_probs: PathBuf,
    #[arg(long)]
    pub val_truth: PathBuf,
    #[arg(long, default_value_t = lesion_core::fusion::DEFAULT_AGE_BIN_WIDTH)]
    pub age_bin_width: f64,
    #[arg(long, default_value = "predicted")]
    pub confidence_key: ConfidenceKey,
    #[arg(long, short)]
    pub output: PathBuf,
}

pub fn fit_priors_cmd(args: &FitPriorsArgs) -> Result<String> {
    let taxonomy = args.taxonomy.checked()?;
    let metadata = io::read_metadata_csv(&args.metadata)?;
    let truth = io::read_truth_csv(&args.truth, &taxonomy)?;
    let by_id: HashMap<&str, Truth> = truth.iter().map(|(id, t)| (id.as_str(), *t)).collect();
    let training = metadata
        .into_iter()
        .map(|m| match by_id.get(m.sample_id.as_str()) {
            Some(Truth::Known(c)) => Ok((m, *c)),
            Some(Truth::Unknown) => Err(Error::UnexpectedUnknown {
                path: args.truth.clone(),
                sample_id: m.sample_id,
            }),
            None => Err(Error::MissingSample {
                path: args.truth.clone(),
                sample_id: m.sample_id,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let priors = fit_priors(
        &training,
        taxonomy.len(),
        AgeBinning::new(args.age_bin_width)?,
    )?;

    let val = io::read_probability_csv(&args.val_probs, &taxonomy, args.taxonomy.tolerance)?;
    let val_truth = io::read_truth_csv(&args.val_truth, &taxonomy)?;
    let validation = labeled_records(val, &args.val_probs, &val_truth, &args.val_truth)?;
    let confidence = fit_mean_confidence(&validation, args.confidence_key)?;

    let summary = format!(
        "fitted priors on {} of {} training records ({} excluded for missing fields); {} regions",
        training.len() - priors.excluded_records,
        training.len(),
        priors.excluded_records,
        priors.region_vocabulary.len()
    );
    io::write_json(
        &args.output,
        &MetadataModel {
            taxonomy,
            priors,
            confidence,
        },
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------- fuse-meta

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    /// Metadata model JSON from `fit-priors`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub probs: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    /// Decisions from `detect-unknown`; samples flagged unknown keep the outlier label.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

pub fn fuse_meta(args: &FuseArgs) -> Result<String> {
    let taxonomy = args.taxonomy.checked()?;
    let model: MetadataModel = io::read_json(&args.model)?;
    if model.taxonomy != taxonomy {
        return Err(Error::Config(format!(
            "{} was fitted for labels {:?}",
            args.model.display(),
            model.taxonomy.known_labels()
        )));
    }
    model.priors.check()?;
    let records = io::read_probability_csv(&args.probs, &taxonomy, args.taxonomy.tolerance)?;
    let metadata = io::read_metadata_csv(&args.metadata)?;

    let unknown: HashSet<String> = match &args.decisions {
        Some(path) => io::read_decisions_csv(path)?
            .into_iter()
            .filter_map(|(id, u)| u.then_some(id))
            .collect(),
        None => HashSet::new(),
    };
    let (to_fuse, rejected): (Vec<_>, Vec<_>) = records
        .into_iter()
        .partition(|r| !unknown.contains(&r.sample_id));
    let (fused, summary) = fuse_batch(&to_fuse, &metadata, &model.priors, &model.confidence)?;

    let mut rows: Vec<FusedRow> = fused.into_iter().map(FusedRow::Fused).collect();
    rows.extend(rejected.iter().map(|r| FusedRow::Unknown {
        sample_id: r.sample_id.clone(),
        predicted: r.predicted(),
    }));
    rows.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
    io::write_fusion_csv(&args.output, &taxonomy, &rows)?;
    Ok(format!(
        "fused {} samples: {} re-ranked with metadata, {} labels changed, {} left as unknown",
        summary.total,
        summary.applied,
        summary.flipped,
        rejected.len()
    ))
}

// ----------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("scores").required(true).args(["probs", "submission"]))]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long)]
    pub truth: PathBuf,
    /// Closed-set probabilities.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Open-set submission with the outlier column.
    #[arg(long)]
    pub submission: Option<PathBuf>,
    /// Predicted labels overriding the argmax (`image,label,...`, e.g. `fuse-meta` output).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Report JSON.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(EvaluationReport, String)> {
    let taxonomy = args.taxonomy.checked()?;
    let n = taxonomy.len();
    let truth = io::read_truth_csv(&args.truth, &taxonomy)?;
    let labels = match &args.predictions {
        Some(p) => Some((p, io::read_label_csv(p, &taxonomy)?)),
        None => None,
    };

    // Scores in the open-set layout when the outlier class can occur anywhere.
    let (scores_path, records, open) = match (&args.submission, &args.probs) {
        (Some(path), _) => {
            let rows = io::read_submission_csv(path, &taxonomy)?;
            let records = rows
                .into_iter()
                .map(|row| {
                    let probs =
                        ProbabilityVector::validate(row.scores, n + 1, SUBMISSION_TOLERANCE)?;
                    Ok(ProbabilityRecord::new(row.sample_id, probs)?)
                })
                .collect::<Result<Vec<_>>>()?;
            (path, records, true)
        }
        (None, Some(path)) => {
            let records = io::read_probability_csv(path, &taxonomy, args.taxonomy.tolerance)?;
            let open = truth.iter().any(|(_, t)| *t == Truth::Unknown)
                || labels
                    .as_ref()
                    .is_some_and(|(_, l)| l.iter().any(|(_, t)| *t == Truth::Unknown));
            let records = if open {
                records
                    .into_iter()
                    .map(|r| {
                        let mut v = r.probs.into_inner();
                        v.push(0.0);
                        let probs = ProbabilityVector::validate(v, n + 1, args.taxonomy.tolerance)?;
                        Ok(ProbabilityRecord::new(r.sample_id, probs)?)
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                records
            };
            (path, records, open)
        }
        (None, None) => {
            return Err(Error::Config(
                "evaluate needs --probs or --submission".into(),
            ))
        }
    };

    let width = if open { n + 1 } else { n };
    let mut joined: Vec<LabeledRecord> = join_truth(records, scores_path, &truth, &args.truth)?
        .into_iter()
        .map(|(r, t)| {
            Ok(LabeledRecord::new(
                r.sample_id,
                r.probs,
                t.open_set_index(&taxonomy),
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    joined.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let predicted: Vec<usize> = match &labels {
        None => joined.iter().map(LabeledRecord::predicted).collect(),
        Some((path, rows)) => {
            let by_id: HashMap<&str, Truth> =
                rows.iter().map(|(id, t)| (id.as_str(), *t)).collect();
            joined
                .iter()
                .map(|r| {
                    by_id
                        .get(r.sample_id.as_str())
                        .map(|t| t.open_set_index(&taxonomy))
                        .ok_or_else(|| Error::MissingSample {
                            path: path.to_path_buf(),
                            sample_id: r.sample_id.clone(),
                        })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let names: Vec<String> = if open {
        taxonomy.open_set_labels()
    } else {
        taxonomy.known_labels().to_vec()
    };
    debug_assert_eq!(names.len(), width);
    let mut report = EvaluationReport::compute(&names, &joined, &predicted)?;
    if open {
        let outliers = predicted.iter().filter(|&&p| p == n).count();
        report.outliers = Some(OutlierSummary::from_counts(predicted.len(), outliers, 0));
    }
    if let Some(out) = &args.output {
        io::write_json(out, &report)?;
    }
    let table = report.to_string();
    Ok((report, table))
}

// ------------------------------------------------------------------ weights

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    /// CSV with `label,count` rows; the ISIC 2019 training counts when omitted.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Also write `label,count,weight`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// `(label, count, weight)` rows.
pub fn weights_table(args: &WeightsArgs) -> Result<Vec<(String, u64, f64)>> {
    let counts = match &args.counts {
        Some(path) => io::read_counts_csv(path)?,
        None => ClassTaxonomy::isic2019()
            .known_labels()
            .iter()
            .cloned()
            .zip(ISIC2019_COUNTS)
            .collect(),
    };
    let raw: Vec<u64> = counts.iter().map(|(_, c)| *c).collect();
    let weights: Vec<f64> = class_weights(&raw)?;
    Ok(counts
        .into_iter()
        .zip(weights)
        .map(|((label, count), w)| (label, count, w))
        .collect())
}

pub fn weights(args: &WeightsArgs) -> Result<String> {
    let rows = weights_table(args)?;
    let mut text = String::from("label,count,weight\n");
    for (label, count, w) in &rows {
        writeln!(text, "{label},{count},{w:?}").unwrap();
    }
    if let Some(out) = &args.output {
        io::write_atomic(out, |w| w.write_all(text.as_bytes()))?;
    }
    Ok(text.trim_end().to_string())
}

// -------------------------------------------------------------------- synth

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test split size.
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,
    /// Defaults to the test split size.
    #[arg(long)]
    pub validation_samples: Option<usize>,
    /// Defaults to twice the test split size.
    #[arg(long)]
    pub train_samples: Option<usize>,
    /// Relative class frequencies in label order.
    #[arg(long, value_delimiter = ',')]
    pub class_mixture: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub outlier_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    pub confusion: f64,
    #[arg(long, default_value_t = 3)]
    pub models: usize,
    #[arg(long, default_value_t = 0.05)]
    pub missing_rate: f64,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            n_samples: self.n_samples,
            validation_samples: self.validation_samples,
            train_samples: self.train_samples,
            class_mixture: self.class_mixture.clone(),
            outlier_fraction: self.outlier_fraction,
            confusion: self.confusion,
            models: self.models,
            missing_rate: self.missing_rate,
        }
    }
}

pub fn synth_cmd(args: &SynthArgs) -> Result<String> {
    let taxonomy = args.taxonomy.taxonomy()?;
    let fixtures = synth::generate(&args.config(), &taxonomy)?;
    let paths = synth::write_fixtures(&args.out, &taxonomy, &fixtures)?;
    Ok(format!(
        "wrote {} train, {} validation and {} test samples ({} planted outliers, {} models) to {}; config at {}",
        fixtures.train.truth.len(),
        fixtures.validation.truth.len(),
        fixtures.test.truth.len(),
        fixtures.test.planted().len(),
        args.models,
        args.out.display(),
        paths.config.display()
    ))
}

// ----------------------------------------------------------------- pipeline

/// Output file names inside the pipeline's output directory.
pub mod outputs {
    pub const VAL_ENSEMBLE: &str = "val_ensemble.csv";
    pub const TEST_ENSEMBLE: &str = "test_ensemble.csv";
    pub const PROFILE: &str = "profile.json";
    pub const DECISIONS: &str = "decisions.csv";
    pub const SUBMISSION: &str = "submission.csv";
    pub const METADATA_MODEL: &str = "metadata_model.json";
    pub const FUSED: &str = "fused.csv";
    pub const REPORT_ENSEMBLE: &str = "report_ensemble.json";
    pub const REPORT: &str = "report.json";
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline TOML file.
    #[arg(long, short)]
    pub config: PathBuf,
}

pub fn pipeline(args: &PipelineArgs) -> Result<String> {
    run_pipeline(&PipelineConfig::load(&args.config)?)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<String> {
    use outputs::*;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let taxonomy = TaxonomyArgs {
        labels: cfg.labels.clone(),
        unknown_label: cfg.unknown_label.clone(),
        tolerance: cfg.tolerance,
    };
    let mut log = Vec::new();

    for (inputs, name) in [
        (&cfg.validation_probs, VAL_ENSEMBLE),
        (&cfg.test_probs, TEST_ENSEMBLE),
    ] {
        log.push(aggregate(&AggregateArgs {
            taxonomy: taxonomy.clone(),
            rule: cfg.rule,
            output: dir.join(name),
            inputs: inputs.clone(),
        })?);
    }
    log.push(calibrate_entropy(&CalibrateArgs {
        taxonomy: taxonomy.clone(),
        probs: dir.join(VAL_ENSEMBLE),
        truth: cfg.validation_truth.clone(),
        output: dir.join(PROFILE),
    })?);
    log.push(detect_unknown(&DetectArgs {
        taxonomy: taxonomy.clone(),
        profile: dir.join(PROFILE),
        probs: dir.join(TEST_ENSEMBLE),
        mode: cfg.step5_mode,
        decisions: dir.join(DECISIONS),
        submission: Some(dir.join(SUBMISSION)),
    })?);

    let fused = if let Some((train_metadata, train_truth, test_metadata)) = cfg.fusion_inputs() {
        log.push(fit_priors_cmd(&FitPriorsArgs {
            taxonomy: taxonomy.clone(),
            metadata: train_metadata.to_path_buf(),
            truth: train_truth.to_path_buf(),
            val_probs: dir.join(VAL_ENSEMBLE),
            val_truth: cfg.validation_truth.clone(),
            age_bin_width: cfg.age_bin_width,
            confidence_key: cfg.confidence_key,
            output: dir.join(METADATA_MODEL),
        })?);
        log.push(fuse_meta(&FuseArgs {
            taxonomy: taxonomy.clone(),
            model: dir.join(METADATA_MODEL),
            probs: dir.join(TEST_ENSEMBLE),
            metadata: test_metadata.to_path_buf(),
            decisions: Some(dir.join(DECISIONS)),
            output: dir.join(FUSED),
        })?);
        Some(dir.join(FUSED))
    } else {
        None
    };

    if let Some(truth) = &cfg.test_truth {
        let (baseline, _) = evaluate(&EvaluateArgs {
            taxonomy: taxonomy.clone(),
            truth: truth.clone(),
            probs: Some(dir.join(TEST_ENSEMBLE)),
            submission: None,
            predictions: None,
            output: Some(dir.join(REPORT_ENSEMBLE)),
        })?;
        let (_, table) = evaluate(&EvaluateArgs {
            taxonomy,
            truth: truth.clone(),
            probs: None,
            submission: Some(dir.join(SUBMISSION)),
            predictions: fused,
            output: Some(dir.join(REPORT)),
        })?;
        log.push(format!(
            "ensemble alone: balanced accuracy {:.4}\nfinal decisions:\n{table}",
            baseline.balanced_accuracy
        ));
    }
    Ok(log.join("\n"))
}

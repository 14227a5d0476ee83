//! Flat TOML configuration for the `pipeline` subcommand.
//!
//! ```toml
//! labels = ["MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC"]
//! unknown_label = "UNK"
//! rule = "average"               # or "maxprob"
//! step5_mode = "conjunctive"     # or "standalone"
//! age_bin_width = 10.0
//! tolerance = 1e-6
//! confidence_key = "predicted"   # or "true"
//! validation_probs = ["val_model1.csv", "val_model2.csv"]
//! validation_truth = "val_truth.csv"
//! test_probs = ["test_model1.csv", "test_model2.csv"]
//! train_metadata = "train_metadata.csv"   # optional, enables fusion
//! train_truth = "train_truth.csv"         # optional, enables fusion
//! test_metadata = "test_metadata.csv"     # optional, enables fusion
//! test_truth = "test_truth.csv"           # optional, enables evaluation
//! output_dir = "out"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use lesion_core::fusion::DEFAULT_AGE_BIN_WIDTH;
use lesion_core::taxonomy::{DEFAULT_SUM_TOLERANCE, ISIC2019_LABELS, UNKNOWN_LABEL};
use lesion_core::{AggregationRule, ClassTaxonomy, ConfidenceKey, Step5Mode};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::resolve;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_labels")]
    pub labels: Vec<String>,
    #[serde(default = "default_unknown")]
    pub unknown_label: String,
    #[serde(default = "default_rule")]
    pub rule: AggregationRule,
    #[serde(default)]
    pub step5_mode: Step5Mode,
    #[serde(default = "default_bin_width")]
    pub age_bin_width: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Recorded for provenance; the decision pipeline draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub confidence_key: ConfidenceKey,
    pub validation_probs: Vec<PathBuf>,
    pub validation_truth: PathBuf,
    pub test_probs: Vec<PathBuf>,
    pub train_metadata: Option<PathBuf>,
    pub train_truth: Option<PathBuf>,
    pub test_metadata: Option<PathBuf>,
    pub test_truth: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_labels() -> Vec<String> {
    ISIC2019_LABELS.iter().map(|s| s.to_string()).collect()
}

fn default_unknown() -> String {
    UNKNOWN_LABEL.to_string()
}

fn default_rule() -> AggregationRule {
    AggregationRule::Average
}

fn default_bin_width() -> f64 {
    DEFAULT_AGE_BIN_WIDTH
}

fn default_tolerance() -> f64 {
    DEFAULT_SUM_TOLERANCE
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Parses, validates and resolves paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn taxonomy(&self) -> Result<ClassTaxonomy> {
        Ok(ClassTaxonomy::new(
            self.labels.clone(),
            self.unknown_label.clone(),
        )?)
    }

    /// Fusion runs only when all three metadata inputs are given.
    pub fn fusion_inputs(&self) -> Option<(&Path, &Path, &Path)> {
        Some((
            self.train_metadata.as_deref()?,
            self.train_truth.as_deref()?,
            self.test_metadata.as_deref()?,
        ))
    }

    fn validate(&self) -> Result<()> {
        self.taxonomy()?;
        if self.rule == AggregationRule::Majority {
            return Err(Error::Config(
                "rule `majority` yields labels, not probabilities; the pipeline needs `average` or `maxprob`".into(),
            ));
        }
        if !(self.age_bin_width.is_finite() && self.age_bin_width > 0.0) {
            return Err(Error::Config(format!(
                "age_bin_width must be positive, got {}",
                self.age_bin_width
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.validation_probs.is_empty() || self.test_probs.is_empty() {
            return Err(Error::Config(
                "validation_probs and test_probs need at least one file".into(),
            ));
        }
        if self.validation_probs.len() != self.test_probs.len() {
            return Err(Error::Config(format!(
                "{} validation models but {} test models",
                self.validation_probs.len(),
                self.test_probs.len()
            )));
        }
        let partial = [&self.train_metadata, &self.train_truth, &self.test_metadata]
            .iter()
            .filter(|p| p.is_some())
            .count();
        if partial != 0 && partial != 3 {
            return Err(Error::Config(
                "train_metadata, train_truth and test_metadata must be given together".into(),
            ));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| *p = resolve(base, p);
        self.validation_probs.iter_mut().for_each(fix);
        self.test_probs.iter_mut().for_each(fix);
        fix(&mut self.validation_truth);
        fix(&mut self.output_dir);
        for p in [
            &mut self.train_metadata,
            &mut self.train_truth,
            &mut self.test_metadata,
            &mut self.test_truth,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
validation_probs = ["v1.csv"]
validation_truth = "vt.csv"
test_probs = ["t1.csv"]
"#;

    #[test]
    fn defaults() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.labels.len(), 8);
        assert_eq!(cfg.unknown_label, "UNK");
        assert_eq!(cfg.rule, AggregationRule::Average);
        assert_eq!(cfg.step5_mode, Step5Mode::Conjunctive);
        assert_eq!(cfg.age_bin_width, 10.0);
        assert_eq!(cfg.tolerance, 1e-6);
        assert_eq!(cfg.confidence_key, ConfidenceKey::Predicted);
        assert_eq!(cfg.validation_probs, vec![PathBuf::from("/data/v1.csv")]);
        assert_eq!(cfg.output_dir, PathBuf::from("/data/out"));
        assert!(cfg.fusion_inputs().is_none());
    }

    #[test]
    fn rejects_bad_values() {
        for extra in [
            "rule = \"majority\"",
            "age_bin_width = 0.0",
            "tolerance = -1.0",
            "step5_mode = \"sometimes\"",
            "labels = [\"A\", \"A\"]",
            "train_truth = \"x.csv\"",
            "colour = \"blue\"",
        ] {
            let text = format!("{MINIMAL}{extra}\n");
            let err = PipelineConfig::from_toml(&text, Path::new(".")).unwrap_err();
            assert!(
                matches!(err.category(), "config_invalid" | "taxonomy_invalid"),
                "{extra}: {err}"
            );
        }
        let err =
            PipelineConfig::from_toml("test_probs = [\"t.csv\"]\n", Path::new(".")).unwrap_err();
        assert_eq!(err.category(), "config_invalid");
    }

    #[test]
    fn mismatched_model_counts() {
        let text = r#"
validation_probs = ["v1.csv", "v2.csv"]
validation_truth = "vt.csv"
test_probs = ["t1.csv"]
"#;
        assert!(PipelineConfig::from_toml(text, Path::new(".")).is_err());
    }
}

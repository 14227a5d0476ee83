//! Seeded synthetic fixtures: pseudo-model outputs, ground truth and metadata.
//!
//! Known samples get a peaked logit vector around their true class. A
//! `confusion` fraction of them also get a comparable peak on a second class,
//! which produces the miss groups the open-set profile needs. Planted
//! outliers (test split only) get near-flat logits. Metadata is drawn from
//! class-dependent age, sex and region distributions with independent
//! per-field missingness.

use std::path::{Path, PathBuf};

use lesion_core::fusion::Sex;
use lesion_core::{ClassTaxonomy, MetadataRecord, ProbabilityRecord, ProbabilityVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::io::{self, Truth};

/// Class frequencies of the ISIC 2019 training set, MEL..SCC.
pub const ISIC2019_COUNTS: [u64; 8] = [4522, 12875, 3323, 867, 2624, 239, 253, 628];

/// `anatom_site_general` values used for synthetic metadata.
pub const REGIONS: [&str; 8] = [
    "anterior torso",
    "head/neck",
    "lateral torso",
    "lower extremity",
    "oral/genital",
    "palms/soles",
    "posterior torso",
    "upper extremity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Test split size, outliers included.
    pub n_samples: usize,
    /// Defaults to `n_samples`.
    pub validation_samples: Option<usize>,
    /// Defaults to `2 * n_samples`.
    pub train_samples: Option<usize>,
    /// Relative class frequencies; ISIC 2019 counts for the default taxonomy,
    /// uniform otherwise.
    pub class_mixture: Option<Vec<f64>>,
    /// Fraction of the test split drawn as near-uniform outliers.
    pub outlier_fraction: f64,
    /// Probability that a known sample carries a second peak.
    pub confusion: f64,
    pub models: usize,
    /// Per-field probability that age, sex or region is blank.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 1000,
            validation_samples: None,
            train_samples: None,
            class_mixture: None,
            outlier_fraction: 0.1,
            confusion: 0.15,
            models: 3,
            missing_rate: 0.05,
        }
    }
}

impl SynthConfig {
    fn check(&self, taxonomy: &ClassTaxonomy) -> Result<Vec<f64>> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.models == 0 {
            return bad("models must be positive".into());
        }
        for (name, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("confusion", self.confusion),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if taxonomy.len() < 2 {
            return bad("synthetic data needs at least two classes".into());
        }
        let mixture = match &self.class_mixture {
            Some(m) => m.clone(),
            None if taxonomy == &ClassTaxonomy::isic2019() => {
                ISIC2019_COUNTS.iter().map(|&c| c as f64).collect()
            }
            None => vec![1.0; taxonomy.len()],
        };
        if mixture.len() != taxonomy.len() {
            return bad(format!(
                "class_mixture has {} entries for {} classes",
                mixture.len(),
                taxonomy.len()
            ));
        }
        if mixture.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || mixture.iter().sum::<f64>() <= 0.0
        {
            return bad("class_mixture must be non-negative with a positive sum".into());
        }
        Ok(mixture)
    }
}

/// One generated split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub truth: Vec<(String, Truth)>,
    pub metadata: Vec<MetadataRecord>,
    /// One record list per pseudo-model; empty for the training split.
    pub models: Vec<Vec<ProbabilityRecord>>,
}

impl Split {
    /// Ids of planted outliers.
    pub fn planted(&self) -> Vec<&str> {
        self.truth
            .iter()
            .filter(|(_, t)| *t == Truth::Unknown)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub train: Split,
    pub validation: Split,
    pub test: Split,
}

/// Per-class generative parameters, derived from the class index so any
/// taxonomy works.
struct ClassProfile {
    age_mean: f64,
    male_prob: f64,
    favoured_region: usize,
}

impl ClassProfile {
    fn of(class: usize) -> Self {
        Self {
            age_mean: 35.0 + 5.0 * ((class * 3) % 8) as f64,
            male_prob: 0.35 + 0.06 * (class % 6) as f64,
            favoured_region: (class * 5) % REGIONS.len(),
        }
    }
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    cfg: &'a SynthConfig,
    n: usize,
    classes: WeightedIndex<f64>,
}

impl Generator<'_> {
    fn softmax(logits: &[f64]) -> ProbabilityVector {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        ProbabilityVector::new(exp.iter().map(|e| e / sum).collect(), logits.len())
            .expect("softmax output is a distribution")
    }

    fn known_vectors(&mut self, class: usize) -> Vec<ProbabilityVector> {
        let confuser = if self.rng.random_bool(self.cfg.confusion) {
            let other = self.rng.random_range(0..self.n - 1);
            Some(if other >= class { other + 1 } else { other })
        } else {
            None
        };
        let noise = Normal::new(0.0, 0.5).unwrap();
        let peak = Uniform::new(3.0, 6.0).unwrap();
        (0..self.cfg.models)
            .map(|_| {
                let mut logits: Vec<f64> =
                    (0..self.n).map(|_| noise.sample(&mut self.rng)).collect();
                logits[class] += peak.sample(&mut self.rng);
                if let Some(c) = confuser {
                    logits[c] += peak.sample(&mut self.rng);
                }
                Self::softmax(&logits)
            })
            .collect()
    }

    fn outlier_vectors(&mut self) -> Vec<ProbabilityVector> {
        let noise = Normal::new(0.0, 0.3).unwrap();
        (0..self.cfg.models)
            .map(|_| {
                let logits: Vec<f64> = (0..self.n).map(|_| noise.sample(&mut self.rng)).collect();
                Self::softmax(&logits)
            })
            .collect()
    }

    fn metadata(&mut self, id: &str, class: Option<usize>) -> MetadataRecord {
        let profile = match class {
            Some(c) => ClassProfile::of(c),
            None => ClassProfile {
                age_mean: 50.0,
                male_prob: 0.5,
                favoured_region: self.rng.random_range(0..REGIONS.len()),
            },
        };
        let age = Normal::new(profile.age_mean, 12.0)
            .unwrap()
            .sample(&mut self.rng);
        let age = ((age / 5.0).round() * 5.0).clamp(0.0, 95.0);
        let sex = if self.rng.random_bool(profile.male_prob) {
            Sex::Male
        } else {
            Sex::Female
        };
        let region = if self.rng.random_bool(0.5) {
            profile.favoured_region
        } else {
            self.rng.random_range(0..REGIONS.len())
        };
        let rate = self.cfg.missing_rate;
        MetadataRecord {
            sample_id: id.to_string(),
            age: (!self.rng.random_bool(rate)).then_some(age),
            sex: (!self.rng.random_bool(rate)).then_some(sex),
            region: (!self.rng.random_bool(rate)).then(|| REGIONS[region].to_string()),
        }
    }

    fn split(&mut self, prefix: &str, size: usize, outliers: usize, with_models: bool) -> Split {
        // Spread planted outliers evenly through the id range.
        let is_outlier =
            |i: usize| outliers > 0 && (i * outliers) / size != ((i + 1) * outliers) / size;
        let mut split = Split {
            truth: Vec::with_capacity(size),
            metadata: Vec::with_capacity(size),
            models: vec![Vec::with_capacity(size); if with_models { self.cfg.models } else { 0 }],
        };
        for i in 0..size {
            let id = format!("{prefix}_{i:07}");
            let truth = if is_outlier(i) {
                Truth::Unknown
            } else {
                Truth::Known(self.classes.sample(&mut self.rng))
            };
            if with_models {
                let vectors = match truth {
                    Truth::Known(c) => self.known_vectors(c),
                    Truth::Unknown => self.outlier_vectors(),
                };
                for (model, probs) in split.models.iter_mut().zip(vectors) {
                    model.push(ProbabilityRecord {
                        sample_id: id.clone(),
                        probs,
                    });
                }
            }
            split.metadata.push(self.metadata(&id, truth.known()));
            split.truth.push((id, truth));
        }
        split
    }
}

/// Generates all three splits. Identical config and taxonomy give identical output.
pub fn generate(cfg: &SynthConfig, taxonomy: &ClassTaxonomy) -> Result<Fixtures> {
    let mixture = cfg.check(taxonomy)?;
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg,
        n: taxonomy.len(),
        classes: WeightedIndex::new(&mixture).map_err(|e| Error::Config(e.to_string()))?,
    };
    let outliers = (cfg.outlier_fraction * cfg.n_samples as f64).round() as usize;
    let train = g.split(
        "train",
        cfg.train_samples.unwrap_or(2 * cfg.n_samples),
        0,
        false,
    );
    let validation = g.split(
        "val",
        cfg.validation_samples.unwrap_or(cfg.n_samples),
        0,
        true,
    );
    let test = g.split("test", cfg.n_samples, outliers, true);
    Ok(Fixtures {
        train,
        validation,
        test,
    })
}

/// Paths of the files written by [`write_fixtures`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub train_truth: PathBuf,
    pub train_metadata: PathBuf,
    pub val_truth: PathBuf,
    pub val_metadata: PathBuf,
    pub val_models: Vec<PathBuf>,
    pub test_truth: PathBuf,
    pub test_metadata: PathBuf,
    pub test_models: Vec<PathBuf>,
    pub config: PathBuf,
}

impl FixturePaths {
    pub fn new(dir: &Path, models: usize) -> Self {
        let model = |split: &str| {
            (1..=models)
                .map(|k| dir.join(format!("{split}_model{k}.csv")))
                .collect()
        };
        Self {
            train_truth: dir.join("train_truth.csv"),
            train_metadata: dir.join("train_metadata.csv"),
            val_truth: dir.join("val_truth.csv"),
            val_metadata: dir.join("val_metadata.csv"),
            val_models: model("val"),
            test_truth: dir.join("test_truth.csv"),
            test_metadata: dir.join("test_metadata.csv"),
            test_models: model("test"),
            config: dir.join("pipeline.toml"),
        }
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned()
}

/// Writes every split plus a `pipeline.toml` that chains them.
pub fn write_fixtures(dir: &Path, taxonomy: &ClassTaxonomy, fx: &Fixtures) -> Result<FixturePaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = FixturePaths::new(dir, fx.validation.models.len());
    io::write_truth_csv(&paths.train_truth, taxonomy, &fx.train.truth)?;
    io::write_metadata_csv(&paths.train_metadata, &fx.train.metadata)?;
    io::write_truth_csv(&paths.val_truth, taxonomy, &fx.validation.truth)?;
    io::write_metadata_csv(&paths.val_metadata, &fx.validation.metadata)?;
    for (path, records) in paths.val_models.iter().zip(&fx.validation.models) {
        io::write_probability_csv(path, taxonomy, records)?;
    }
    io::write_truth_csv(&paths.test_truth, taxonomy, &fx.test.truth)?;
    io::write_metadata_csv(&paths.test_metadata, &fx.test.metadata)?;
    for (path, records) in paths.test_models.iter().zip(&fx.test.models) {
        io::write_probability_csv(path, taxonomy, records)?;
    }

    let list = |ps: &[PathBuf]| {
        let names: Vec<String> = ps.iter().map(|p| format!("{:?}", file_name(p))).collect();
        format!("[{}]", names.join(", "))
    };
    let labels: Vec<String> = taxonomy
        .known_labels()
        .iter()
        .map(|l| format!("{l:?}"))
        .collect();
    let config = format!(
        "labels = [{labels}]\n\
         unknown_label = {unknown:?}\n\
         rule = \"average\"\n\
         step5_mode = \"conjunctive\"\n\
         age_bin_width = 10.0\n\
         tolerance = 1e-6\n\
         confidence_key = \"predicted\"\n\
         validation_probs = {val}\n\
         validation_truth = \"val_truth.csv\"\n\
         test_probs = {test}\n\
         train_metadata = \"train_metadata.csv\"\n\
         train_truth = \"train_truth.csv\"\n\
         test_metadata = \"test_metadata.csv\"\n\
         test_truth = \"test_truth.csv\"\n\
         output_dir = \"out\"\n",
        labels = labels.join(", "),
        unknown = taxonomy.unknown_label(),
        val = list(&paths.val_models),
        test = list(&paths.test_models),
    );
    io::write_atomic(&paths.config, |w| w.write_all(config.as_bytes()))?;
    Ok(paths)
}

//! CSV and JSON file formats.
//!
//! Probability, ground-truth, metadata and submission files follow the ISIC
//! 2019 challenge layouts. Column order is checked against the taxonomy,
//! never assumed. All writers go through a temporary file in the target
//! directory followed by a rename.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lesion_core::fusion::Sex;
use lesion_core::{
    ClassTaxonomy, FusionResult, MajorityVote, MetadataRecord, OutlierDecision, ProbabilityRecord,
    ProbabilityVector,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Metadata columns, in ISIC order. Other columns (such as `lesion_id`) may
/// be interleaved and are ignored.
pub const METADATA_COLUMNS: [&str; 4] = ["image", "age_approx", "anatom_site_general", "sex"];

const DECISION_COLUMNS: [&str; 6] = [
    "image",
    "predicted",
    "entropy_bits",
    "stage",
    "unknown",
    "warning",
];

/// Writes `path` atomically via a temporary file in the same directory.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut writer = BufWriter::new(tmp.as_file());
        fill(&mut writer).map_err(|e| Error::io(path, e))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn headers(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn expect_header(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    if found != expected {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn probability_header(taxonomy: &ClassTaxonomy) -> Vec<String> {
    std::iter::once("image".to_string())
        .chain(taxonomy.known_labels().iter().cloned())
        .collect()
}

fn submission_header(taxonomy: &ClassTaxonomy) -> Vec<String> {
    std::iter::once("image".to_string())
        .chain(taxonomy.open_set_labels())
        .collect()
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("`{field}` is not a number")))
}

/// Tracks sample ids seen in one file.
struct IdSet<'a> {
    path: &'a Path,
    seen: HashSet<String>,
}

impl<'a> IdSet<'a> {
    fn new(path: &'a Path) -> Self {
        Self {
            path,
            seen: HashSet::new(),
        }
    }

    fn insert(&mut self, line: u64, id: &str) -> Result<()> {
        if id.is_empty() {
            return Err(Error::parse(self.path, line, "empty image id"));
        }
        if !self.seen.insert(id.to_string()) {
            return Err(Error::DuplicateId {
                path: self.path.to_path_buf(),
                sample_id: id.to_string(),
            });
        }
        Ok(())
    }
}

/// Reads an `image,<labels...>` probability file.
pub fn read_probability_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    tolerance: f64,
) -> Result<Vec<ProbabilityRecord>> {
    let mut reader = open_csv(path)?;
    expect_header(
        path,
        &headers(path, &mut reader)?,
        &probability_header(taxonomy),
    )?;
    let n = taxonomy.len();
    let mut ids = IdSet::new(path);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = &row[0];
        ids.insert(line, id)?;
        let values = row
            .iter()
            .skip(1)
            .map(|f| parse_f64(path, line, f))
            .collect::<Result<Vec<_>>>()?;
        let probs = ProbabilityVector::validate(values, n, tolerance).map_err(|source| {
            Error::VectorInvalid {
                path: path.to_path_buf(),
                line,
                source,
            }
        })?;
        records.push(ProbabilityRecord {
            sample_id: id.to_string(),
            probs,
        });
    }
    Ok(records)
}

/// Writes probabilities with shortest round-trip formatting (lossless).
pub fn write_probability_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    records: &[ProbabilityRecord],
) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", probability_header(taxonomy).join(","))?;
        for r in records {
            write!(w, "{}", r.sample_id)?;
            for v in r.probs.as_slice() {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Ground-truth label of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    Known(usize),
    Unknown,
}

impl Truth {
    pub fn known(self) -> Option<usize> {
        match self {
            Self::Known(c) => Some(c),
            Self::Unknown => None,
        }
    }

    /// Column index in the open-set layout (known labels, then the outlier label).
    pub fn open_set_index(self, taxonomy: &ClassTaxonomy) -> usize {
        match self {
            Self::Known(c) => c,
            Self::Unknown => taxonomy.len(),
        }
    }
}

/// Reads an ISIC ground-truth file: one-hot rows over the known labels,
/// optionally followed by the outlier column.
pub fn read_truth_csv(path: &Path, taxonomy: &ClassTaxonomy) -> Result<Vec<(String, Truth)>> {
    let mut reader = open_csv(path)?;
    let found = headers(path, &mut reader)?;
    let open = submission_header(taxonomy);
    if found != open {
        expect_header(path, &found, &probability_header(taxonomy))?;
    }
    let n = taxonomy.len();
    let mut ids = IdSet::new(path);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = &row[0];
        ids.insert(line, id)?;
        let mut hot = None;
        for (col, field) in row.iter().skip(1).enumerate() {
            let v = parse_f64(path, line, field)?;
            if v == 1.0 && hot.is_none() {
                hot = Some(col);
            } else if v != 0.0 {
                return Err(Error::parse(path, line, "ground truth row is not one-hot"));
            }
        }
        let truth = match hot {
            Some(c) if c < n => Truth::Known(c),
            Some(_) => Truth::Unknown,
            None => return Err(Error::parse(path, line, "ground truth row has no label")),
        };
        rows.push((id.to_string(), truth));
    }
    Ok(rows)
}

/// Writes a ground-truth file including the outlier column.
pub fn write_truth_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    rows: &[(String, Truth)],
) -> Result<()> {
    let width = taxonomy.len() + 1;
    write_atomic(path, |w| {
        writeln!(w, "{}", submission_header(taxonomy).join(","))?;
        for (id, truth) in rows {
            let hot = truth.open_set_index(taxonomy);
            write!(w, "{id}")?;
            for col in 0..width {
                write!(w, ",{}", if col == hot { "1.0" } else { "0.0" })?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Reads `image,age_approx,anatom_site_general,sex`; empty cells are missing.
pub fn read_metadata_csv(path: &Path) -> Result<Vec<MetadataRecord>> {
    let mut reader = open_csv(path)?;
    let found = headers(path, &mut reader)?;
    let positions: Vec<Option<usize>> = METADATA_COLUMNS
        .iter()
        .map(|c| found.iter().position(|h| h == c))
        .collect();
    let in_order = positions
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a < b));
    if positions[0] != Some(0) || !in_order {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: METADATA_COLUMNS.join(","),
            found: found.join(","),
        });
    }
    let [_, age_col, region_col, sex_col] = [0, 1, 2, 3].map(|i| positions[i].unwrap());

    let mut ids = IdSet::new(path);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = &row[0];
        ids.insert(line, id)?;
        let cell = |i: usize| row.get(i).filter(|s| !s.is_empty());
        let age = match cell(age_col) {
            None => None,
            Some(s) => {
                let age = parse_f64(path, line, s)?;
                if !(age.is_finite() && age >= 0.0) {
                    return Err(Error::parse(path, line, format!("invalid age `{s}`")));
                }
                Some(age)
            }
        };
        let sex = cell(sex_col)
            .map(|s| s.parse::<Sex>().map_err(|m| Error::parse(path, line, m)))
            .transpose()?;
        records.push(MetadataRecord {
            sample_id: id.to_string(),
            age,
            sex,
            region: cell(region_col).map(str::to_string),
        });
    }
    Ok(records)
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn write_metadata_csv(path: &Path, records: &[MetadataRecord]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", METADATA_COLUMNS.join(","))?;
        for r in records {
            let age = r.age.map(|a| format!("{a:?}")).unwrap_or_default();
            let region = r.region.as_deref().map(quote).unwrap_or_default();
            let sex = r.sex.map(|s| s.to_string()).unwrap_or_default();
            writeln!(w, "{},{age},{region},{sex}", r.sample_id)?;
        }
        Ok(())
    })
}

/// One row of an open-set submission: known-class scores plus the outlier score.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRow {
    pub sample_id: String,
    pub scores: Vec<f64>,
}

impl SubmissionRow {
    /// Unknown samples become the hard `0,…,0,1` pattern; known samples keep
    /// their vector with a zero outlier score.
    pub fn from_probs(sample_id: &str, probs: &ProbabilityVector, is_unknown: bool) -> Self {
        let scores = if is_unknown {
            let mut s = vec![0.0; probs.len() + 1];
            s[probs.len()] = 1.0;
            s
        } else {
            let mut s = probs.as_slice().to_vec();
            s.push(0.0);
            s
        };
        Self {
            sample_id: sample_id.to_string(),
            scores,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.scores.last() == Some(&1.0)
            && self.scores[..self.scores.len() - 1]
                .iter()
                .all(|&v| v == 0.0)
    }

    /// Highest-scoring column, lowest index on ties.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.scores.iter().enumerate() {
            if v > self.scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Writes `image,<labels...>,UNK` with six decimals.
pub fn write_submission_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    rows: &[SubmissionRow],
) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", submission_header(taxonomy).join(","))?;
        for r in rows {
            write!(w, "{}", r.sample_id)?;
            for v in &r.scores {
                write!(w, ",{v:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn read_submission_csv(path: &Path, taxonomy: &ClassTaxonomy) -> Result<Vec<SubmissionRow>> {
    let mut reader = open_csv(path)?;
    expect_header(
        path,
        &headers(path, &mut reader)?,
        &submission_header(taxonomy),
    )?;
    let mut ids = IdSet::new(path);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.insert(line, &row[0])?;
        let scores = row
            .iter()
            .skip(1)
            .map(|f| {
                let v = parse_f64(path, line, f)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("score `{f}` outside [0, 1]"),
                    ));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SubmissionRow {
            sample_id: row[0].to_string(),
            scores,
        });
    }
    Ok(rows)
}

/// Per-record detector trace.
pub fn write_decisions_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    decisions: &[OutlierDecision],
) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", DECISION_COLUMNS.join(","))?;
        for d in decisions {
            let warning = match d.warning {
                Some(lesion_core::DecisionWarning::UnfittableClass) => "unfittable_class",
                Some(lesion_core::DecisionWarning::MissGroupSubstituted) => {
                    "miss_group_substituted"
                }
                None => "",
            };
            writeln!(
                w,
                "{},{},{:?},{},{},{}",
                d.sample_id,
                taxonomy.label(d.predicted_label).unwrap_or("?"),
                d.entropy_bits,
                d.stage_reached,
                d.is_unknown,
                warning
            )?;
        }
        Ok(())
    })
}

/// Reads the `image` and `unknown` columns of a decisions file.
pub fn read_decisions_csv(path: &Path) -> Result<Vec<(String, bool)>> {
    let mut reader = open_csv(path)?;
    let found = headers(path, &mut reader)?;
    let expected: Vec<String> = DECISION_COLUMNS.iter().map(|s| s.to_string()).collect();
    expect_header(path, &found, &expected)?;
    let mut ids = IdSet::new(path);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.insert(line, &row[0])?;
        let unknown = row[4]
            .parse::<bool>()
            .map_err(|_| Error::parse(path, line, format!("`{}` is not true/false", &row[4])))?;
        rows.push((row[0].to_string(), unknown));
    }
    Ok(rows)
}

/// One row of the fusion output.
#[derive(Debug, Clone, PartialEq)]
pub enum FusedRow {
    Fused(FusionResult),
    /// Rejected by the open-set detector; fusion is not attempted.
    Unknown {
        sample_id: String,
        predicted: usize,
    },
}

impl FusedRow {
    pub fn sample_id(&self) -> &str {
        match self {
            Self::Fused(r) => &r.sample_id,
            Self::Unknown { sample_id, .. } => sample_id,
        }
    }
}

/// Fusion output: final label plus the trace needed to audit it.
pub fn write_fusion_csv(path: &Path, taxonomy: &ClassTaxonomy, rows: &[FusedRow]) -> Result<()> {
    let name = |i: usize| taxonomy.label(i).unwrap_or("?");
    write_atomic(path, |w| {
        writeln!(
            w,
            "image,label,original_label,second_label,score1,score2,applied,skipped"
        )?;
        for row in rows {
            match row {
                FusedRow::Fused(r) => {
                    let skipped = match r.skipped {
                        Some(s) => serde_json::to_value(s)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                        None => String::new(),
                    };
                    writeln!(
                        w,
                        "{},{},{},{},{:?},{:?},{},{}",
                        r.sample_id,
                        name(r.final_label),
                        name(r.original_label),
                        name(r.second_label),
                        r.scores.0,
                        r.scores.1,
                        r.applied,
                        skipped
                    )?;
                }
                FusedRow::Unknown {
                    sample_id,
                    predicted,
                } => writeln!(
                    w,
                    "{sample_id},{},{},,,,false,unknown",
                    taxonomy.unknown_label(),
                    name(*predicted)
                )?,
            }
        }
        Ok(())
    })
}

/// Majority-vote output: `image,label,votes`.
pub fn write_votes_csv(
    path: &Path,
    taxonomy: &ClassTaxonomy,
    votes: &[MajorityVote],
) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "image,label,votes")?;
        for v in votes {
            writeln!(
                w,
                "{},{},{}",
                v.sample_id,
                taxonomy.label(v.label).unwrap_or("?"),
                v.votes
            )?;
        }
        Ok(())
    })
}

/// Reads the `image` and `label` columns of a label file such as the fusion
/// output; labels may be known labels or the outlier label.
pub fn read_label_csv(path: &Path, taxonomy: &ClassTaxonomy) -> Result<Vec<(String, Truth)>> {
    let mut reader = open_csv(path)?;
    let found = headers(path, &mut reader)?;
    if found.len() < 2 || found[0] != "image" || found[1] != "label" {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: "image,label,...".into(),
            found: found.join(","),
        });
    }
    let mut ids = IdSet::new(path);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.insert(line, &row[0])?;
        let label = &row[1];
        let truth = if label == taxonomy.unknown_label() {
            Truth::Unknown
        } else {
            Truth::Known(
                taxonomy
                    .index_of(label)
                    .ok_or_else(|| Error::parse(path, line, format!("unknown label `{label}`")))?,
            )
        };
        rows.push((row[0].to_string(), truth));
    }
    Ok(rows)
}

/// Reads `model,balanced_accuracy` rows.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    read_named_values(path, ["model", "balanced_accuracy"], |p, line, f| {
        parse_f64(p, line, f)
    })
}

/// Reads `label,count` rows.
pub fn read_counts_csv(path: &Path) -> Result<Vec<(String, u64)>> {
    read_named_values(path, ["label", "count"], |p, line, f| {
        f.parse::<u64>()
            .map_err(|_| Error::parse(p, line, format!("`{f}` is not a count")))
    })
}

fn read_named_values<V>(
    path: &Path,
    header: [&str; 2],
    parse: impl Fn(&Path, u64, &str) -> Result<V>,
) -> Result<Vec<(String, V)>> {
    let mut reader = open_csv(path)?;
    let expected: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    expect_header(path, &headers(path, &mut reader)?, &expected)?;
    let mut ids = IdSet::new(path);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.insert(line, &row[0])?;
        rows.push((row[0].to_string(), parse(path, line, &row[1])?));
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, |w| writeln!(w, "{text}"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

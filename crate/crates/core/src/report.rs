//! Run reports and dataset export.
//!
//! A report is pretty-printed JSON with a fixed field order; scores are
//! rounded to 4 decimals so identical runs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusTree, NodeId};
use crate::labels::LabelSummary;
use crate::oracle::OracleHandle;
use crate::sample::SampleSet;
use crate::scoring::{overall_scores, round4, round_to_4, ScoreCard};
use crate::search::{ClassReport, SearchConfig, Status};

pub const REPORT_SCHEMA: &str = "domain-scope-report";
pub const REPORT_VERSION: u32 = 1;
pub const DATASET_FILE: &str = "dataset.json";
pub const DATASET_FORMAT: &str = "domain-scope-dataset";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid report: {0}")]
    Invalid(String),
    #[error("report has no found class to export")]
    NothingFound,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub backend: String,
    pub num_classes: usize,
    pub batch_size: usize,
    pub workers: usize,
    pub budget: Option<u64>,
}

impl OracleInfo {
    pub fn of(o: &OracleHandle) -> Self {
        Self {
            backend: o.describe(),
            num_classes: o.num_classes(),
            batch_size: o.config().batch_size,
            workers: o.config().workers,
            budget: o.config().budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub path: String,
    pub nodes: usize,
    pub leaves: usize,
    pub samples: usize,
    pub sample_shape: Vec<usize>,
}

impl CorpusInfo {
    pub fn of(t: &CorpusTree, path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            nodes: t.len(),
            leaves: t.leaf_count(),
            samples: t.total_samples(),
            sample_shape: t.sample_shape().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub found: usize,
    pub not_found: usize,
    /// Sum over found classes.
    #[serde(serialize_with = "round4")]
    pub functional: f64,
    #[serde(serialize_with = "round4")]
    pub semantic: f64,
}

impl Totals {
    /// Totals of the report-rounded score cards.
    pub fn of(classes: &[ClassReport]) -> Result<Self, ReportError> {
        let cards: Vec<ScoreCard> = classes
            .iter()
            .filter_map(|c| c.score_card.map(|s| s.rounded()))
            .collect();
        let sums = overall_scores(&cards).map_err(|e| ReportError::Invalid(e.to_string()))?;
        let found = classes.iter().filter(|c| c.is_found()).count();
        Ok(Self {
            found,
            not_found: classes.len() - found,
            functional: round_to_4(sums.functional),
            semantic: round_to_4(sums.semantic),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: SearchConfig,
    pub oracle: OracleInfo,
    pub corpus: CorpusInfo,
    pub num_classes: usize,
    pub classes: Vec<ClassReport>,
    pub totals: Totals,
    pub query_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_checks: Vec<LabelSummary>,
}

impl RunReport {
    pub fn new(
        config: SearchConfig,
        oracle: OracleInfo,
        corpus: CorpusInfo,
        classes: Vec<ClassReport>,
        query_count: u64,
    ) -> Result<Self, ReportError> {
        let report = Self {
            schema: REPORT_SCHEMA.to_string(),
            schema_version: REPORT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            num_classes: oracle.num_classes,
            totals: Totals::of(&classes)?,
            config,
            oracle,
            corpus,
            classes,
            query_count,
            wall_time_ms: None,
            label_checks: Vec::new(),
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let fail = |m: String| Err(ReportError::Invalid(m));
        if self.schema != REPORT_SCHEMA || self.schema_version != REPORT_VERSION {
            return fail(format!(
                "unsupported schema {} v{}",
                self.schema, self.schema_version
            ));
        }
        if self.classes.len() != self.num_classes {
            return fail(format!(
                "{} class reports for {} classes",
                self.classes.len(),
                self.num_classes
            ));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.class_index != i {
                return fail(format!("class report {i} has index {}", c.class_index));
            }
            let found = c.status == Status::Found;
            if found != c.score_card.is_some() || found == c.selection.is_empty() {
                return fail(format!("class {i}: status disagrees with its selection"));
            }
            if c.post_filter_count > c.pre_filter_count || c.selection.len() != c.post_filter_count {
                return fail(format!("class {i}: inconsistent sample counts"));
            }
        }
        let totals = Totals::of(&self.classes)?;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        if totals.found != self.totals.found
            || totals.not_found != self.totals.not_found
            || !close(totals.functional, self.totals.functional)
            || !close(totals.semantic, self.totals.semantic)
        {
            return fail("totals do not match the class score cards".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes the report through a temporary file so a failed run never
    /// leaves a partial report behind.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&tmp, self.to_json()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    /// Reads and validates a report.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let report: Self = serde_json::from_str(&text).map_err(|source| ReportError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        report.validate()?;
        Ok(report)
    }

    pub fn found(&self) -> impl Iterator<Item = &ClassReport> + '_ {
        self.classes.iter().filter(|c| c.is_found())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetClass {
    pub class_index: usize,
    pub samples_file: String,
    pub count: usize,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub shape: Vec<usize>,
    pub classes: Vec<DatasetClass>,
}

/// Writes the filtered selection of every found class as
/// `class_NNNN.f32` plus a `dataset.json` manifest.
pub fn export_dataset(
    report: &RunReport,
    t: &CorpusTree,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, ReportError> {
    let dir = out_dir.as_ref();
    let found: Vec<&ClassReport> = report.found().collect();
    if found.is_empty() {
        return Err(ReportError::NothingFound);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut classes = Vec::with_capacity(found.len());
    for c in found {
        c.selection.validate(t)?;
        let samples = c.selection.gather(t)?;
        let name = format!("class_{:04}.f32", c.class_index);
        let path = dir.join(&name);
        samples.write_block(&path).map_err(io_err(&path))?;
        classes.push(DatasetClass {
            class_index: c.class_index,
            samples_file: name,
            count: samples.len(),
            nodes: c.chosen_nodes.clone(),
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.to_string(),
        version: 1,
        shape: t.sample_shape().to_vec(),
        classes,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(DATASET_FILE);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads an exported dataset back as `(class, samples)` pairs.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(usize, SampleSet)>, ReportError> {
    let dir = dir.as_ref();
    let path = dir.join(DATASET_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.clone(),
        source,
    })?;
    if manifest.format != DATASET_FORMAT {
        return Err(ReportError::Invalid(format!("unknown dataset format {:?}", manifest.format)));
    }
    manifest
        .classes
        .iter()
        .map(|c| {
            let p = dir.join(&c.samples_file);
            let s = SampleSet::read_block(&p, manifest.shape.clone(), c.count).map_err(io_err(&p))?;
            Ok((c.class_index, s))
        })
        .collect()
}

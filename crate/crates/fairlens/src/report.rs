//! Versioned JSON reports and the plot-ready CSV tables derived from them.

use std::fs;
use std::io::Write;
use std::path::Path;

use fairlens_core::analysis::{CorrelationTable, ModelRecord};
use fairlens_core::classifiers::GbtConfig;
use fairlens_core::metrics::MetricBudget;
use fairlens_core::FactorSpace;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Parameters of the k-NN adjustment applied to a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjustment {
    pub k: usize,
    pub include_self: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub rng_algorithm: String,
    pub world: String,
    pub space: FactorSpace,
    pub metric_budget: MetricBudget,
    pub gbt: GbtConfig,
    pub fairness_samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<Adjustment>,
    pub records: Vec<ModelRecord>,
}

impl Report {
    pub fn load(path: &Path) -> Result<Report> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let report: Report = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(CliError::Failed(format!(
                "{}: report schema_version {} unsupported",
                path.display(),
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    /// Rows `model_id, source, dci, unfairness, gbt_accuracy` for records
    /// carrying all three values.
    pub fn scatter_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_id", "source", "dci", "unfairness", "gbt_accuracy"])
            .expect("in-memory write");
        for r in &self.records {
            if let (Some(d), Some(u), Some(a)) = (r.scores.dci, r.unfairness, r.gbt_accuracy) {
                w.write_record([
                    r.model_id.to_string(),
                    r.source.clone(),
                    d.to_string(),
                    u.to_string(),
                    a.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        w.into_inner().expect("in-memory flush")
    }

    /// One row per (model, task): `model_id, source, target, sensitive,
    /// unfairness`.
    pub fn distribution_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_id", "source", "target", "sensitive", "unfairness"])
            .expect("in-memory write");
        let names: Vec<&str> = self
            .space
            .factors()
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        for r in &self.records {
            for t in &r.tasks {
                w.write_record([
                    r.model_id.to_string(),
                    r.source.clone(),
                    names[t.target].to_string(),
                    names[t.sensitive].to_string(),
                    t.unfairness.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// A correlation table as CSV: first column the row label, missing cells
/// empty.
pub fn correlation_csv(table: &CorrelationTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["field".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (label, row) in table.rows.iter().zip(&table.values) {
        let mut cells = vec![label.clone()];
        cells.extend(
            row.iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&cells).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents)
        .map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

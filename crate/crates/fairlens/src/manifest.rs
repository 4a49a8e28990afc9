//! Evaluation manifests: which world, which sources, which budgets.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fairlens_core::classifiers::GbtConfig;
use fairlens_core::metrics::MetricBudget;
use fairlens_core::worlds::{build_encoder, EncoderSpec};
use fairlens_core::FactorSpace;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides a manifest's seed.
pub const SEED_ENV: &str = "FAIRLENS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// A synthetic encoder over the manifest's factor space.
    Encoder(EncoderSpec),
    /// A CSV code dump, relative to the manifest's directory.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    #[serde(flatten)]
    pub kind: SourceKind,
}

fn default_fairness_samples() -> usize {
    10_000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fairlens-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Label grouping records of the same world in analyses.
    pub world: String,
    pub space: FactorSpace,
    pub sources: Vec<SourceEntry>,
    #[serde(default)]
    pub metric_budget: MetricBudget,
    #[serde(default)]
    pub gbt: GbtConfig,
    /// Fresh draws per sensitive value when estimating unfairness.
    #[serde(default = "default_fairness_samples")]
    pub fairness_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative paths resolve against the manifest's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_row_cap")]
    pub table_row_cap: usize,
}

fn default_row_cap() -> usize {
    crate::table::DEFAULT_ROW_CAP
}

impl Manifest {
    /// Reads and validates a manifest; `base` becomes the directory that
    /// relative paths resolve against.
    pub fn load(path: &Path) -> Result<(Manifest, PathBuf)> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate(&base)?;
        Ok((manifest, base))
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        let bad = |m: String| Err(CliError::Manifest(m));
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.sources.is_empty() {
            return bad("no sources".into());
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if !ids.insert(s.id.as_str()) {
                return bad(format!("duplicate source id '{}'", s.id));
            }
            match &s.kind {
                SourceKind::Encoder(spec) => {
                    build_encoder(spec, &self.space)
                        .map_err(|e| CliError::Manifest(format!("source '{}': {e}", s.id)))?;
                }
                SourceKind::Table(p) => {
                    let full = base.join(p);
                    if !full.is_file() {
                        return bad(format!(
                            "source '{}': table {} not found",
                            s.id,
                            full.display()
                        ));
                    }
                }
            }
        }
        self.metric_budget
            .validate()
            .map_err(|e| CliError::Manifest(format!("metric_budget: {e}")))?;
        self.gbt
            .validate()
            .map_err(|e| CliError::Manifest(format!("gbt: {e}")))?;
        if self.fairness_samples == 0 {
            return bad("fairness_samples must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.space.num_factors() < 2 {
            return bad("need at least 2 factors to form tasks".into());
        }
        Ok(())
    }

    /// The seed after applying the environment override.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(self.seed),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            world: "w".into(),
            space: FactorSpace::from_cardinalities(&[2, 3]).unwrap(),
            sources: vec![
                SourceEntry {
                    id: "id".into(),
                    kind: SourceKind::Encoder(EncoderSpec::identity(2)),
                },
                SourceEntry {
                    id: "tab".into(),
                    kind: SourceKind::Table("codes.csv".into()),
                },
            ],
            metric_budget: MetricBudget::default(),
            gbt: GbtConfig::default(),
            fairness_samples: 100,
            seed: 4,
            output_dir: "out".into(),
            workers: None,
            table_row_cap: 10,
        }
    }

    #[test]
    fn json_round_trip_and_shape() {
        let m = sample();
        let json = m.to_json();
        assert!(json.contains("\"encoder\": {\n        \"kind\": \"identity\""));
        assert!(json.contains("\"table\": \"codes.csv\""));
        assert_eq!(serde_json::from_str::<Manifest>(&json).unwrap(), m);
    }

    #[test]
    fn defaults_fill_in() {
        let json = r#"{"schema_version":1,"world":"w","space":{"factors":[{"name":"a","cardinality":2},{"name":"b","cardinality":2}]},
            "sources":[{"id":"x","encoder":{"kind":"identity","code_dim":2}}]}"#;
        let m: Manifest = serde_json::from_str(json).unwrap();
        assert_eq!(m.fairness_samples, 10_000);
        assert_eq!(m.metric_budget, MetricBudget::default());
        m.validate(Path::new(".")).unwrap();
    }

    #[test]
    fn validation_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample();
        assert!(m
            .validate(dir.path())
            .unwrap_err()
            .to_string()
            .contains("not found"));
        fs::write(dir.path().join("codes.csv"), "x").unwrap();
        m.validate(dir.path()).unwrap();
        m.sources[1].id = "id".into();
        assert!(m
            .validate(dir.path())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let mut m = sample();
        m.sources.truncate(1);
        m.sources[0].kind = SourceKind::Encoder(EncoderSpec::identity(1));
        assert!(m.validate(dir.path()).is_err());
        let mut m = sample();
        m.sources.clear();
        assert!(m.validate(dir.path()).is_err());
        let mut m = sample();
        m.sources.truncate(1);
        m.fairness_samples = 0;
        assert!(m.validate(dir.path()).is_err());
    }
}

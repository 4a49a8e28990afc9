//! Manifest evaluation: every source through all six scores and the
//! downstream fairness audit, in a worker pool.

use std::path::Path;
use std::time::Instant;

use fairlens_core::analysis::ModelRecord;
use fairlens_core::fairness::{unfairness_score, FairnessConfig};
use fairlens_core::metrics::{Metric, MetricBudget};
use fairlens_core::space::RepresentationSource;
use fairlens_core::worlds::build_encoder;
use fairlens_core::RNG_ALGORITHM;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::manifest::{Manifest, SourceKind};
use crate::report::{Report, REPORT_SCHEMA_VERSION};
use crate::table::CodeTable;

/// Seed for the source at `index` in a run seeded with `base`.
pub fn source_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn open_source(
    manifest: &Manifest,
    base_dir: &Path,
    kind: &SourceKind,
) -> Result<Box<dyn RepresentationSource>> {
    Ok(match kind {
        SourceKind::Encoder(spec) => Box::new(build_encoder(spec, &manifest.space)?),
        SourceKind::Table(path) => Box::new(CodeTable::read(
            &base_dir.join(path),
            &manifest.space,
            manifest.table_row_cap,
        )?),
    })
}

/// Audits source `index`. Failures of individual scores, of the fairness
/// audit or of opening the source are recorded in `errors`.
pub fn evaluate_source(
    manifest: &Manifest,
    base_dir: &Path,
    index: usize,
    run_seed: u64,
) -> ModelRecord {
    let entry = &manifest.sources[index];
    let mut record = ModelRecord::new(index, entry.id.clone());
    record.world = manifest.world.clone();
    record.seed = run_seed;
    record.description = match &entry.kind {
        SourceKind::Encoder(spec) => spec.label(),
        SourceKind::Table(path) => path.display().to_string(),
    };
    let started = Instant::now();
    let source = match open_source(manifest, base_dir, &entry.kind) {
        Ok(s) => s,
        Err(e) => {
            log::error!("{}: {e}", entry.id);
            record.errors.insert("source".into(), e.to_string());
            return record;
        }
    };
    let seed = source_seed(run_seed, index);
    let budget = MetricBudget {
        seed,
        ..manifest.metric_budget
    };
    for metric in Metric::ALL {
        match metric.evaluate(source.as_ref(), &manifest.space, &budget) {
            Ok(v) => record.scores.set(metric, Some(v)),
            Err(e) => {
                log::warn!("{}: {metric}: {e}", entry.id);
                record.errors.insert(metric.name().into(), e.to_string());
            }
        }
    }
    let config = FairnessConfig {
        gbt: fairlens_core::classifiers::GbtConfig {
            seed,
            ..manifest.gbt
        },
        samples_per_value: manifest.fairness_samples,
    };
    match unfairness_score(source.as_ref(), &manifest.space, &config) {
        Ok(report) => {
            record.gbt_accuracy = Some(report.gbt_accuracy);
            record.unfairness = Some(report.unfairness);
            record.target_accuracy = report.target_accuracy;
            record.tasks = report.tasks;
        }
        Err(e) => {
            log::warn!("{}: fairness: {e}", entry.id);
            record.errors.insert("fairness".into(), e.to_string());
        }
    }
    log::info!(
        "{}: evaluated in {:.1}s",
        entry.id,
        started.elapsed().as_secs_f64()
    );
    record
}

/// Whether a record produced anything usable.
pub fn succeeded(record: &ModelRecord) -> bool {
    record.unfairness.is_some() || Metric::ALL.iter().any(|&m| record.scores.get(m).is_some())
}

/// Evaluates every source of `manifest` on `workers` threads (all cores if
/// `None`). Records come back in manifest order regardless of scheduling.
pub fn evaluate(
    manifest: &Manifest,
    base_dir: &Path,
    run_seed: u64,
    workers: Option<usize>,
) -> Result<Report> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Failed(format!("worker pool: {e}")))?;
    let records: Vec<ModelRecord> = pool.install(|| {
        (0..manifest.sources.len())
            .into_par_iter()
            .map(|i| evaluate_source(manifest, base_dir, i, run_seed))
            .collect()
    });
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        rng_algorithm: RNG_ALGORITHM.into(),
        world: manifest.world.clone(),
        space: manifest.space.clone(),
        metric_budget: manifest.metric_budget,
        gbt: manifest.gbt,
        fairness_samples: manifest.fairness_samples,
        seed: run_seed,
        adjustment: None,
        records,
    })
}

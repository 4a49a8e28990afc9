//! Command-line interface: argument definitions and command dispatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairlens_core::analysis::{
    correlation_table, knn_adjust, model_selection_experiment, selection_groups, Field, Opponent,
    DEFAULT_NEIGHBOURS,
};
use fairlens_core::classifiers::GbtConfig;
use fairlens_core::metrics::{Metric, MetricBudget};
use fairlens_core::worlds::{
    encoder_family, gap_grid, CounterexampleWorld, Family, PredictionMode,
};
use fairlens_core::{rng_for, FactorSpace};

use crate::error::{CliError, Result};
use crate::manifest::{Manifest, SourceEntry, SourceKind, MANIFEST_SCHEMA_VERSION};
use crate::pipeline;
use crate::report::{correlation_csv, write_atomic, Adjustment, Report};

#[derive(Debug, Parser)]
#[command(
    name = "fairlens",
    version,
    about = "Disentanglement and fairness audits of representations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a manifest for a synthetic encoder family.
    Gen(GenArgs),
    /// Evaluate every source of a manifest.
    Eval(EvalArgs),
    /// Add k-NN adjusted scores to a report.
    Adjust(AdjustArgs),
    /// Rank-correlate scores with unfairness.
    Correlate(CorrelateArgs),
    /// Exact analysis of the x = min(y, s) world.
    Theorem(TheoremArgs),
    /// Accuracy-based model selection experiment.
    Select(SelectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Standard,
    Extended,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Factor cardinalities, e.g. 8,8,4,4.
    #[arg(long, value_delimiter = ',', required = true)]
    pub factors: Vec<usize>,
    #[arg(long, value_enum, default_value = "standard")]
    pub family: FamilyArg,
    /// Rotation angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "15,30,45,60,75,90")]
    pub angles: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// World label; derived from the cardinalities when absent.
    #[arg(long)]
    pub world: Option<String>,
    #[arg(long, default_value = "fairlens-out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub metric_train: Option<usize>,
    #[arg(long)]
    pub metric_eval: Option<usize>,
    #[arg(long)]
    pub gbt_train: Option<usize>,
    #[arg(long)]
    pub gbt_test: Option<usize>,
    #[arg(long)]
    pub gbt_trees: Option<usize>,
    #[arg(long)]
    pub fairness_samples: Option<usize>,
    /// Manifest path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    /// Overrides the manifest's output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AdjustArgs {
    pub report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NEIGHBOURS)]
    pub k: usize,
    /// Count each record among its own neighbours.
    #[arg(long)]
    pub include_self: bool,
    /// Where to write the augmented report; in place when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    pub report: PathBuf,
    /// Use the adjusted scores written by `adjust`.
    #[arg(long)]
    pub adjusted: bool,
    /// Directory for the CSV tables; the report's directory when absent.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Stochastic,
    Argmax,
}

impl From<ModeArg> for PredictionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stochastic => PredictionMode::Stochastic,
            ModeArg::Argmax => PredictionMode::Argmax,
        }
    }
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 0.5)]
    pub b: f64,
    #[arg(long, value_enum, default_value = "stochastic")]
    pub mode: ModeArg,
    /// Also write the (q, b) grid comparison to this CSV.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    pub report: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw the comparison model from the group without the selected one.
    #[arg(long)]
    pub exclude_selected: bool,
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut String) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Adjust(a) => adjust(a, out),
        Command::Correlate(a) => correlate(a, out),
        Command::Theorem(a) => theorem(a, out),
        Command::Select(a) => select(a, out),
    }
}

/// Builds the manifest `gen` would write.
pub fn generate_manifest(a: &GenArgs) -> Result<Manifest> {
    if a.factors.len() < 2 {
        return Err(CliError::Usage(
            "--factors needs at least 2 factors to form tasks".into(),
        ));
    }
    let space =
        FactorSpace::from_cardinalities(&a.factors).map_err(|e| CliError::Usage(e.to_string()))?;
    let family = match a.family {
        FamilyArg::Standard => Family::Standard,
        FamilyArg::Extended => Family::Extended,
    };
    let sources = encoder_family(a.factors.len(), family, &a.angles, a.seed)
        .into_iter()
        .map(|(id, spec)| SourceEntry {
            id,
            kind: SourceKind::Encoder(spec),
        })
        .collect();
    let defaults = MetricBudget::default();
    let gbt = GbtConfig::default();
    let cards: Vec<String> = a.factors.iter().map(|c| c.to_string()).collect();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        world: a
            .world
            .clone()
            .unwrap_or_else(|| format!("grid_{}", cards.join("x"))),
        space,
        sources,
        metric_budget: MetricBudget {
            num_train_points: a.metric_train.unwrap_or(defaults.num_train_points),
            num_eval_points: a.metric_eval.unwrap_or(defaults.num_eval_points),
            ..defaults
        },
        gbt: GbtConfig {
            train_size: a.gbt_train.unwrap_or(gbt.train_size),
            test_size: a.gbt_test.unwrap_or(gbt.test_size),
            num_trees: a.gbt_trees.unwrap_or(gbt.num_trees),
            ..gbt
        },
        fairness_samples: a.fairness_samples.unwrap_or(10_000),
        seed: a.seed,
        output_dir: a.output_dir.clone(),
        workers: None,
        table_row_cap: crate::table::DEFAULT_ROW_CAP,
    };
    manifest
        .validate(Path::new("."))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(manifest)
}

fn gen(a: GenArgs, out: &mut String) -> Result<()> {
    let manifest = generate_manifest(&a)?;
    let json = manifest.to_json();
    match &a.out {
        Some(path) => {
            write_atomic(path, json.as_bytes())?;
            writeln!(
                out,
                "wrote {} with {} sources",
                path.display(),
                manifest.sources.len()
            )
            .unwrap();
        }
        None => out.push_str(&json),
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn eval(a: EvalArgs, out: &mut String) -> Result<()> {
    let (manifest, base) = Manifest::load(&a.manifest)?;
    if a.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let seed = manifest.effective_seed()?;
    let report = pipeline::evaluate(&manifest, &base, seed, a.workers.or(manifest.workers))?;
    let dir = a
        .output_dir
        .unwrap_or_else(|| base.join(&manifest.output_dir));
    report.save(&dir.join("report.json"))?;
    write_atomic(&dir.join("unfairness_vs_dci.csv"), &report.scatter_csv())?;
    write_atomic(
        &dir.join("unfairness_distribution.csv"),
        &report.distribution_csv(),
    )?;
    writeln!(
        out,
        "{:<32} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "source", "betavae", "factorvae", "mig", "modular", "dci", "sap", "acc", "unfair"
    )
    .unwrap();
    for r in &report.records {
        let s = &r.scores;
        writeln!(
            out,
            "{:<32} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            r.source,
            fmt_opt(s.betavae),
            fmt_opt(s.factorvae),
            fmt_opt(s.mig),
            fmt_opt(s.modularity),
            fmt_opt(s.dci),
            fmt_opt(s.sap),
            fmt_opt(r.gbt_accuracy),
            fmt_opt(r.unfairness)
        )
        .unwrap();
        for (what, msg) in &r.errors {
            writeln!(out, "  error[{what}]: {msg}").unwrap();
        }
    }
    writeln!(out, "wrote {}", dir.join("report.json").display()).unwrap();
    if !report.records.iter().any(pipeline::succeeded) {
        return Err(CliError::Failed("no source could be evaluated".into()));
    }
    Ok(())
}

/// Adds adjusted scores and adjusted unfairness to every record that has
/// the underlying value; returns the fields that were adjusted.
pub fn adjust_report(report: &mut Report, k: usize, include_self: bool) -> Result<Vec<Field>> {
    let mut done = Vec::new();
    let mut fields = Field::SCORES.to_vec();
    fields.push(Field::Unfairness);
    for field in fields {
        let adjusted = field
            .adjusted()
            .expect("scores and unfairness have adjusted forms");
        match knn_adjust(&report.records, field, k, include_self) {
            Ok(values) => {
                for (r, v) in report.records.iter_mut().zip(values) {
                    match v {
                        Some(v) => r.adjusted.insert(adjusted.name(), v),
                        None => r.adjusted.remove(&adjusted.name()),
                    };
                }
                done.push(adjusted);
            }
            Err(e) => log::warn!("skipping {adjusted}: {e}"),
        }
    }
    if !done.contains(&Field::AdjustedUnfairness) {
        return Err(CliError::Failed(format!(
            "too few records with unfairness to adjust with k = {k}"
        )));
    }
    report.adjustment = Some(Adjustment { k, include_self });
    Ok(done)
}

fn adjust(a: AdjustArgs, out: &mut String) -> Result<()> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let mut report = Report::load(&a.report)?;
    let done = adjust_report(&mut report, a.k, a.include_self)?;
    let path = a.out.unwrap_or(a.report);
    report.save(&path)?;
    let names: Vec<String> = done.iter().map(|f| f.name()).collect();
    writeln!(out, "added {} to {}", names.join(", "), path.display()).unwrap();
    Ok(())
}

fn render_table(t: &fairlens_core::analysis::CorrelationTable, out: &mut String) {
    write!(out, "{:<22}", "").unwrap();
    for c in &t.columns {
        write!(out, " {c:>20}").unwrap();
    }
    out.push('\n');
    for (label, row) in t.rows.iter().zip(&t.values) {
        write!(out, "{label:<22}").unwrap();
        for cell in row {
            write!(
                out,
                " {:>20}",
                cell.map_or_else(|| "-".into(), |v| format!("{v:+.4}"))
            )
            .unwrap();
        }
        out.push('\n');
    }
}

fn correlate(a: CorrelateArgs, out: &mut String) -> Result<()> {
    let report = Report::load(&a.report)?;
    if a.adjusted && report.adjustment.is_none() {
        return Err(CliError::Usage(
            "report has no adjusted scores; run `fairlens adjust` first".into(),
        ));
    }
    let metrics: Vec<Field> = if a.adjusted {
        Metric::ALL.map(Field::Adjusted).to_vec()
    } else {
        Field::SCORES.to_vec()
    };
    let target = if a.adjusted {
        Field::AdjustedUnfairness
    } else {
        Field::Unfairness
    };
    let mut rows = metrics.clone();
    rows.push(Field::GbtAccuracy);
    let vs_unfairness = correlation_table(&report.records, &rows, &[target])?;
    let matrix = correlation_table(&report.records, &metrics, &metrics)?;
    let dir = a
        .out_dir
        .unwrap_or_else(|| a.report.parent().map(Path::to_path_buf).unwrap_or_default());
    let suffix = if a.adjusted { "_adjusted" } else { "" };
    write_atomic(
        &dir.join(format!("correlation{suffix}.csv")),
        &correlation_csv(&vs_unfairness),
    )?;
    write_atomic(
        &dir.join(format!("metric_correlation{suffix}.csv")),
        &correlation_csv(&matrix),
    )?;
    render_table(&vs_unfairness, out);
    out.push('\n');
    render_table(&matrix, out);
    Ok(())
}

fn theorem(a: TheoremArgs, out: &mut String) -> Result<()> {
    let world = CounterexampleWorld::new(a.q, a.b).map_err(|e| CliError::Usage(e.to_string()))?;
    let mode: PredictionMode = a.mode.into();
    let joint = world.joint();
    writeln!(
        out,
        "world q = p(s=1) = {}, b = p(y=1) = {}, x = min(y, s)",
        a.q, a.b
    )
    .unwrap();
    writeln!(out, "joint p(y, s, x):").unwrap();
    for y in 0..2 {
        for s in 0..2 {
            for x in 0..2 {
                writeln!(out, "  y={y} s={s} x={x}  {:.6}", joint.cells[y][s][x]).unwrap();
            }
        }
    }
    let post = world.posterior();
    writeln!(
        out,
        "posterior p(y=1 | x=0) = {:.6}, p(y=1 | x=1) = {:.6}",
        post[0], post[1]
    )
    .unwrap();
    let (p0, p1) = (world.p_pred_given_s(mode, 0), world.p_pred_given_s(mode, 1));
    writeln!(
        out,
        "mode {}: p(yhat=1 | s=0) = {p0:.6}, p(yhat=1 | s=1) = {p1:.6}, p(yhat=1) = {:.6}",
        mode_name(mode),
        world.p_pred(mode)
    )
    .unwrap();
    let gap = world.dp_gap(mode);
    match mode {
        PredictionMode::Stochastic => {
            let closed = world.closed_form_stochastic_gap();
            writeln!(
                out,
                "gap {gap:.6} (enumerated), {closed:.6} (closed form b(1-b)/(1-qb)), |diff| {:.3e}",
                (gap - closed).abs()
            )
            .unwrap();
            writeln!(
                out,
                "shift p(yhat=1) - p(yhat=1 | s=0) = {:.6} (closed form bq(1-b)/(1-qb) = {:.6})",
                world.p_pred(mode) - p0,
                world.closed_form_stochastic_shift_s0()
            )
            .unwrap();
        }
        PredictionMode::Argmax => writeln!(out, "gap {gap:.6} (enumerated)").unwrap(),
    }
    writeln!(out, "unfairness {:.6}", world.unfairness(mode)).unwrap();
    if let Some(path) = &a.sweep {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "q",
            "b",
            "gap_closed_form",
            "gap_enumerated",
            "abs_diff",
            "unfairness_stochastic",
            "unfairness_argmax",
        ])
        .expect("in-memory write");
        let mut worst = 0.0f64;
        for (q, b, closed, enumerated) in gap_grid() {
            let wq = CounterexampleWorld::new(q, b)?;
            worst = worst.max((closed - enumerated).abs());
            w.write_record([
                q.to_string(),
                b.to_string(),
                closed.to_string(),
                enumerated.to_string(),
                (closed - enumerated).abs().to_string(),
                wq.unfairness(PredictionMode::Stochastic).to_string(),
                wq.unfairness(PredictionMode::Argmax).to_string(),
            ])
            .expect("in-memory write");
        }
        write_atomic(path, &w.into_inner().expect("in-memory flush"))?;
        writeln!(
            out,
            "sweep: wrote {} (max |closed - enumerated| = {worst:.3e})",
            path.display()
        )
        .unwrap();
    }
    Ok(())
}

fn mode_name(mode: PredictionMode) -> &'static str {
    match mode {
        PredictionMode::Stochastic => "stochastic",
        PredictionMode::Argmax => "argmax",
    }
}

fn select(a: SelectArgs, out: &mut String) -> Result<()> {
    let report = Report::load(&a.report)?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let groups = selection_groups(&report.records);
    let opponent = if a.exclude_selected {
        Opponent::OtherCandidate
    } else {
        Opponent::AnyCandidate
    };
    let mut rng = rng_for(a.seed, 0);
    let fraction = model_selection_experiment(&groups, a.trials, opponent, &mut rng)?;
    writeln!(
        out,
        "selected model fairer in {fraction:.4} of {} trials over {} groups",
        a.trials,
        groups.len()
    )
    .unwrap();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairlens_core::analysis::ModelRecord;

    fn report(n: usize) -> Report {
        let records = (0..n)
            .map(|i| {
                let mut r = ModelRecord::new(i, format!("m{i}"));
                r.gbt_accuracy = Some(i as f64 / 10.0);
                r.unfairness = Some(0.5 - i as f64 / 20.0);
                r.scores.mig = Some(0.25);
                r
            })
            .collect();
        Report {
            schema_version: crate::report::REPORT_SCHEMA_VERSION,
            rng_algorithm: fairlens_core::RNG_ALGORITHM.into(),
            world: "w".into(),
            space: FactorSpace::from_cardinalities(&[2, 2]).unwrap(),
            metric_budget: MetricBudget::default(),
            gbt: GbtConfig::default(),
            fairness_samples: 1,
            seed: 0,
            adjustment: None,
            records,
        }
    }

    #[test]
    fn adjust_fills_available_fields() {
        let mut r = report(6);
        let done = adjust_report(&mut r, 5, false).unwrap();
        assert_eq!(
            done,
            vec![Field::Adjusted(Metric::Mig), Field::AdjustedUnfairness]
        );
        assert_eq!(
            r.adjustment,
            Some(Adjustment {
                k: 5,
                include_self: false
            })
        );
        assert_eq!(r.records[3].adjusted["adjusted_mig"], 0.0);
        assert!((r.records[0].adjusted["adjusted_unfairness"] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn adjust_needs_enough_records() {
        let mut r = report(5);
        assert!(adjust_report(&mut r, 5, false).is_err());
        assert!(r.adjustment.is_none());
        assert!(adjust_report(&mut r, 5, true).is_ok());
    }

    #[test]
    fn gen_rejects_bad_arguments() {
        let args = |factors: Vec<usize>, angles: Vec<f64>| GenArgs {
            factors,
            family: FamilyArg::Standard,
            angles,
            seed: 0,
            world: None,
            output_dir: "out".into(),
            metric_train: None,
            metric_eval: None,
            gbt_train: None,
            gbt_test: None,
            gbt_trees: None,
            fairness_samples: Some(0),
            out: None,
        };
        assert!(matches!(
            generate_manifest(&args(vec![4], vec![])),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            generate_manifest(&args(vec![4, 4], vec![])),
            Err(CliError::Usage(_))
        ));
        let mut ok = args(vec![4, 3], vec![30.0]);
        ok.fairness_samples = None;
        let m = generate_manifest(&ok).unwrap();
        assert_eq!(m.world, "grid_4x3");
        assert!(m.sources.iter().any(|s| s.id == "rotation_30"));
    }
}

//! Collection-level analyses over audited representations: nearest-neighbour
//! score adjustment, rank-correlation tables and the model-selection
//! experiment.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimators::spearman;
use crate::fairness::{Task, TaskUnfairness};
use crate::metrics::Metric;
use crate::{Error, Result, SeededRng};

/// Neighbourhood size used by default when adjusting scores.
pub const DEFAULT_NEIGHBOURS: usize = 5;

/// The six scores of one representation; a score that failed is `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub betavae: Option<f64>,
    pub factorvae: Option<f64>,
    pub mig: Option<f64>,
    pub modularity: Option<f64>,
    pub dci: Option<f64>,
    pub sap: Option<f64>,
}

impl Scores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::BetaVae => self.betavae,
            Metric::FactorVae => self.factorvae,
            Metric::Mig => self.mig,
            Metric::Modularity => self.modularity,
            Metric::Dci => self.dci,
            Metric::Sap => self.sap,
        }
    }

    pub fn set(&mut self, metric: Metric, value: Option<f64>) {
        let slot = match metric {
            Metric::BetaVae => &mut self.betavae,
            Metric::FactorVae => &mut self.factorvae,
            Metric::Mig => &mut self.mig,
            Metric::Modularity => &mut self.modularity,
            Metric::Dci => &mut self.dci,
            Metric::Sap => &mut self.sap,
        };
        *slot = value;
    }
}

/// One audited representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// Position of the source in its collection; breaks neighbour and
    /// selection ties.
    pub model_id: usize,
    pub source: String,
    /// Encoder description or external table path.
    pub description: String,
    pub world: String,
    /// Run seed shared by every record evaluated together.
    pub seed: u64,
    pub scores: Scores,
    pub gbt_accuracy: Option<f64>,
    pub unfairness: Option<f64>,
    pub target_accuracy: Vec<f64>,
    pub tasks: Vec<TaskUnfairness>,
    #[serde(default)]
    pub adjusted: BTreeMap<String, f64>,
    #[serde(default)]
    pub errors: BTreeMap<String, String>,
}

impl ModelRecord {
    pub fn new(model_id: usize, source: impl Into<String>) -> Self {
        ModelRecord {
            model_id,
            source: source.into(),
            description: String::new(),
            world: String::new(),
            seed: 0,
            scores: Scores::default(),
            gbt_accuracy: None,
            unfairness: None,
            target_accuracy: Vec::new(),
            tasks: Vec::new(),
            adjusted: BTreeMap::new(),
            errors: BTreeMap::new(),
        }
    }

    pub fn value(&self, field: Field) -> Option<f64> {
        match field {
            Field::Score(m) => self.scores.get(m),
            Field::GbtAccuracy => self.gbt_accuracy,
            Field::Unfairness => self.unfairness,
            Field::Adjusted(_) | Field::AdjustedUnfairness => {
                self.adjusted.get(&field.name()).copied()
            }
        }
    }
}

/// A numeric column of a record collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Score(Metric),
    GbtAccuracy,
    Unfairness,
    Adjusted(Metric),
    AdjustedUnfairness,
}

impl Field {
    pub const SCORES: [Field; 6] = [
        Field::Score(Metric::BetaVae),
        Field::Score(Metric::FactorVae),
        Field::Score(Metric::Mig),
        Field::Score(Metric::Modularity),
        Field::Score(Metric::Dci),
        Field::Score(Metric::Sap),
    ];

    pub fn name(self) -> String {
        match self {
            Field::Score(m) => m.name().into(),
            Field::GbtAccuracy => "gbt_accuracy".into(),
            Field::Unfairness => "unfairness".into(),
            Field::Adjusted(m) => format!("adjusted_{}", m.name()),
            Field::AdjustedUnfairness => "adjusted_unfairness".into(),
        }
    }

    /// The adjusted counterpart of a score or of unfairness.
    pub fn adjusted(self) -> Option<Field> {
        match self {
            Field::Score(m) => Some(Field::Adjusted(m)),
            Field::Unfairness => Some(Field::AdjustedUnfairness),
            _ => None,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt_accuracy" => Ok(Field::GbtAccuracy),
            "unfairness" => Ok(Field::Unfairness),
            "adjusted_unfairness" => Ok(Field::AdjustedUnfairness),
            _ => match s.strip_prefix("adjusted_") {
                Some(rest) => rest.parse().map(Field::Adjusted),
                None => s.parse().map(Field::Score),
            },
        }
    }
}

/// `value − mean(value over the k records nearest in gbt_accuracy)`.
///
/// Records lacking the field or an accuracy get `None` and are not used
/// as neighbours. Ties in distance go to the lower `model_id`. With
/// `include_self` the record counts as one of its own `k` neighbours.
pub fn knn_adjust(
    records: &[ModelRecord],
    field: Field,
    k: usize,
    include_self: bool,
) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::domain("neighbourhood size must be at least 1"));
    }
    let usable: Vec<(usize, f64, f64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((i, r.gbt_accuracy?, r.value(field)?)))
        .collect();
    let needed = if include_self { k } else { k + 1 };
    if usable.len() < needed {
        return Err(Error::domain(format!(
            "adjusting {field} with k = {k} needs {needed} records with values, found {}",
            usable.len()
        )));
    }
    let mut out = alloc::vec![None; records.len()];
    let mut candidates: Vec<(f64, usize, f64)> = Vec::with_capacity(usable.len());
    for &(i, acc, value) in &usable {
        candidates.clear();
        candidates.extend(
            usable
                .iter()
                .filter(|&&(j, _, _)| include_self || j != i)
                .map(|&(j, a, v)| ((a - acc).abs(), records[j].model_id, v)),
        );
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mean = candidates[..k].iter().map(|c| c.2).sum::<f64>() / k as f64;
        out[i] = Some(value - mean);
    }
    Ok(out)
}

/// Spearman coefficients with row and column labels; `None` marks a cell
/// with fewer than three complete pairs or zero rank variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationTable {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.columns.iter().position(|c| c == column)?;
        self.values[i][j]
    }
}

/// Spearman correlation of every `(x, y)` field pair over the records
/// carrying both values.
pub fn correlation_table(
    records: &[ModelRecord],
    x_fields: &[Field],
    y_fields: &[Field],
) -> Result<CorrelationTable> {
    if records.len() < 3 {
        return Err(Error::domain(format!(
            "correlation needs at least 3 records, got {}",
            records.len()
        )));
    }
    let mut values = Vec::with_capacity(x_fields.len());
    for &x in x_fields {
        let mut row = Vec::with_capacity(y_fields.len());
        for &y in y_fields {
            let (a, b): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter_map(|r| Some((r.value(x)?, r.value(y)?)))
                .unzip();
            let cell = if a.len() < 3 {
                None
            } else {
                match spearman(&a, &b) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedCorrelation(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            row.push(cell);
        }
        values.push(row);
    }
    Ok(CorrelationTable {
        rows: x_fields.iter().map(|f| f.name()).collect(),
        columns: y_fields.iter().map(|f| f.name()).collect(),
        values,
    })
}

/// One trained downstream classifier competing within a selection group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: usize,
    pub accuracy: f64,
    pub unfairness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGroup {
    pub world: String,
    pub seed: u64,
    pub task: Task,
    pub candidates: Vec<Candidate>,
}

/// Groups every record's per-task results by `(world, seed, task)`.
/// A candidate's accuracy is its model's test accuracy on the task target.
pub fn selection_groups(records: &[ModelRecord]) -> Vec<SelectionGroup> {
    let mut groups: BTreeMap<(String, u64, Task), Vec<Candidate>> = BTreeMap::new();
    for r in records {
        for t in &r.tasks {
            let Some(&accuracy) = r.target_accuracy.get(t.target) else {
                continue;
            };
            let task = Task {
                target: t.target,
                sensitive: t.sensitive,
            };
            groups
                .entry((r.world.clone(), r.seed, task))
                .or_default()
                .push(Candidate {
                    model_id: r.model_id,
                    accuracy,
                    unfairness: t.unfairness,
                });
        }
    }
    groups
        .into_iter()
        .map(|((world, seed, task), candidates)| SelectionGroup {
            world,
            seed,
            task,
            candidates,
        })
        .collect()
}

/// How the comparison candidate is drawn in [`model_selection_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opponent {
    /// Uniform over the whole group, the selected candidate included.
    AnyCandidate,
    /// Uniform over the group without the selected candidate.
    OtherCandidate,
}

/// Fraction of trials in which the most accurate candidate of a random
/// group is strictly fairer than a random opponent from the same group;
/// ties count one half.
pub fn model_selection_experiment(
    groups: &[SelectionGroup],
    trials: usize,
    opponent: Opponent,
    rng: &mut SeededRng,
) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::domain("model selection needs at least one group"));
    }
    if trials == 0 {
        return Err(Error::domain("model selection needs at least one trial"));
    }
    if let Some(g) = groups.iter().find(|g| g.candidates.len() < 2) {
        return Err(Error::domain(format!(
            "group ({}, seed {}, task {:?}) has {} candidates, need 2",
            g.world,
            g.seed,
            g.task,
            g.candidates.len()
        )));
    }
    let mut score = 0.0;
    for _ in 0..trials {
        let group = &groups[rng.random_range(0..groups.len())];
        let c = &group.candidates;
        let a = (0..c.len())
            .reduce(|best, i| {
                let better = c[i].accuracy > c[best].accuracy
                    || (c[i].accuracy == c[best].accuracy && c[i].model_id < c[best].model_id);
                if better {
                    i
                } else {
                    best
                }
            })
            .expect("group is non-empty");
        let b = match opponent {
            Opponent::AnyCandidate => rng.random_range(0..c.len()),
            Opponent::OtherCandidate => {
                let j = rng.random_range(0..c.len() - 1);
                if j >= a {
                    j + 1
                } else {
                    j
                }
            }
        };
        score += if c[a].unfairness < c[b].unfairness {
            1.0
        } else if c[a].unfairness == c[b].unfairness {
            0.5
        } else {
            0.0
        };
    }
    Ok(score / trials as f64)
}

//! Demographic-parity auditing of downstream predictors.
//!
//! For a target factor `y` and sensitive factor `s`, the unfairness of a
//! predictor is the mean over sensitive values of
//! `TV(p(ŷ), p(ŷ | do(s = v)))`, where the interventional distribution
//! clamps `s` and resamples every other factor from its prior.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifiers::{accuracy, train_gbt, GbtConfig, GbtModel};
use crate::estimators::{total_variation, DiscreteDistribution};
use crate::space::{rng_for, sample_batch, FactorAssignment, FactorSpace, RepresentationSource};
use crate::{Error, Result, SeededRng};

/// Largest enumeration exact mode will attempt.
pub const MAX_EXACT_ASSIGNMENTS: usize = 1 << 20;

/// A downstream classifier over codes, possibly stochastic.
pub trait Predictor: Sync {
    /// Size of the label set predictions range over.
    fn num_labels(&self) -> usize;

    /// Adds `weight` times this predictor's label distribution at `code`
    /// into `mass`.
    fn accumulate(&self, code: &[f64], weight: f64, mass: &mut [f64]);
}

/// Always predicts one label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor {
    pub label: usize,
    pub num_labels: usize,
}

impl Predictor for ConstantPredictor {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn accumulate(&self, _code: &[f64], weight: f64, mass: &mut [f64]) {
        mass[self.label] += weight;
    }
}

/// Predicts from a single code dim via a label lookup table indexed by the
/// rounded code value.
#[derive(Debug, Clone)]
pub struct LookupPredictor {
    pub dim: usize,
    pub offset: f64,
    pub scale: f64,
    pub table: Vec<usize>,
    pub num_labels: usize,
}

impl Predictor for LookupPredictor {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn accumulate(&self, code: &[f64], weight: f64, mass: &mut [f64]) {
        let idx = libm::round((code[self.dim] - self.offset) * self.scale).max(0.0) as usize;
        mass[self.table[idx.min(self.table.len() - 1)]] += weight;
    }
}

/// How prediction distributions are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    /// Enumerate every assignment, weighted by priors, on noise-free codes.
    Exact,
    /// `n` fresh draws per distribution.
    Sampled { n: usize },
}

/// An ordered `(target, sensitive)` pair of distinct factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    pub target: usize,
    pub sensitive: usize,
}

impl Task {
    pub fn new(space: &FactorSpace, target: usize, sensitive: usize) -> Result<Self> {
        let k = space.num_factors();
        if target >= k || sensitive >= k || target == sensitive {
            return Err(Error::domain(format!(
                "task ({target}, {sensitive}) invalid for {k} factors"
            )));
        }
        Ok(Task { target, sensitive })
    }
}

/// All `k(k - 1)` ordered pairs, target-major.
pub fn enumerate_tasks(space: &FactorSpace) -> Result<Vec<Task>> {
    let k = space.num_factors();
    if k < 2 {
        return Err(Error::domain("need at least 2 factors to form tasks"));
    }
    Ok((0..k)
        .flat_map(|t| {
            (0..k).filter(move |&s| s != t).map(move |s| Task {
                target: t,
                sensitive: s,
            })
        })
        .collect())
}

fn labelled_sample(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    n: usize,
    target: usize,
    rng: &mut SeededRng,
) -> Result<(crate::Matrix, Vec<usize>)> {
    let ds = sample_batch(
        source,
        space,
        n,
        &FactorAssignment::free(space.num_factors()),
        rng,
    )?;
    Ok((ds.code_matrix(), ds.factor_column(target)))
}

/// Trains a GBT predicting factor `target` from codes on
/// `config.train_size` fresh draws; returns it with its accuracy on
/// `config.test_size` further draws.
pub fn train_downstream(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    target: usize,
    config: &GbtConfig,
) -> Result<(GbtModel, f64)> {
    if target >= space.num_factors() {
        return Err(Error::domain(format!(
            "target factor {target} out of range"
        )));
    }
    config.validate()?;
    let mut rng = rng_for(config.seed, target as u64);
    let (x, y) = labelled_sample(source, space, config.train_size, target, &mut rng)?;
    let model = train_gbt(&x, &y, config)?;
    let (tx, ty) = labelled_sample(source, space, config.test_size, target, &mut rng)?;
    let acc = accuracy(&model, &tx, &ty)?;
    Ok((model, acc))
}

/// `p(ŷ)` or, with `intervention = Some((s, v))`, `p(ŷ | do(s = v))`.
pub fn prediction_distribution(
    predictor: &dyn Predictor,
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    intervention: Option<(usize, usize)>,
    estimation: Estimation,
    rng: &mut SeededRng,
) -> Result<DiscreteDistribution> {
    let k = space.num_factors();
    let mut fixed = FactorAssignment::free(k);
    if let Some((s, v)) = intervention {
        if s >= k || v >= space.cardinality(s) {
            return Err(Error::domain(format!(
                "intervention ({s}, {v}) out of range"
            )));
        }
        fixed.fix(s, v);
    }
    let labels = predictor.num_labels();
    if labels == 0 {
        return Err(Error::domain("predictor has an empty label set"));
    }
    let mut mass = vec![0.0; labels];
    match estimation {
        Estimation::Sampled { n } => {
            if n == 0 {
                return Err(Error::domain("sample count must be at least 1"));
            }
            let ds = sample_batch(source, space, n, &fixed, rng)?;
            let w = 1.0 / n as f64;
            for i in 0..n {
                predictor.accumulate(ds.code_row(i), w, &mut mass);
            }
        }
        Estimation::Exact => enumerate_exact(predictor, source, space, &fixed, &mut mass)?,
    }
    DiscreteDistribution::from_masses(&mass)
}

fn enumerate_exact(
    predictor: &dyn Predictor,
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    fixed: &FactorAssignment,
    mass: &mut [f64],
) -> Result<()> {
    let k = space.num_factors();
    let free: Vec<usize> = (0..k).filter(|&f| !fixed.is_fixed(f)).collect();
    let count = free
        .iter()
        .fold(1usize, |acc, &f| acc.saturating_mul(space.cardinality(f)));
    if count > MAX_EXACT_ASSIGNMENTS {
        return Err(Error::domain(format!(
            "{count} assignments exceed the exact-mode limit"
        )));
    }
    let mut values = fixed.values.clone();
    for &f in &free {
        values[f] = 0;
    }
    let mut code = vec![0.0; source.code_dim()];
    loop {
        let weight: f64 = free.iter().map(|&f| space.prior(f)[values[f]]).product();
        if weight > 0.0 {
            if !source.mean_code(&values, &mut code) {
                return Err(Error::domain(
                    "source has no noise-free code for exact mode",
                ));
            }
            predictor.accumulate(&code, weight, mass);
        }
        // mixed-radix increment over the free slots
        let mut carry = true;
        for &f in &free {
            values[f] += 1;
            if values[f] < space.cardinality(f) {
                carry = false;
                break;
            }
            values[f] = 0;
        }
        if carry {
            return Ok(());
        }
    }
}

/// Marginal and per-value interventional prediction distributions for one
/// sensitive factor.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalProfile {
    pub marginal: DiscreteDistribution,
    pub conditionals: Vec<DiscreteDistribution>,
}

/// Computes `p(ŷ | do(s = v))` for every `v`, and `p(ŷ)` as their
/// prior-weighted mixture.
pub fn interventional_profile(
    predictor: &dyn Predictor,
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    sensitive: usize,
    estimation: Estimation,
    rng: &mut SeededRng,
) -> Result<InterventionalProfile> {
    if sensitive >= space.num_factors() {
        return Err(Error::domain(format!(
            "sensitive factor {sensitive} out of range"
        )));
    }
    let conditionals = (0..space.cardinality(sensitive))
        .map(|v| {
            prediction_distribution(
                predictor,
                source,
                space,
                Some((sensitive, v)),
                estimation,
                rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mixture = vec![0.0; predictor.num_labels()];
    for (cond, &p) in conditionals.iter().zip(space.prior(sensitive)) {
        for (m, &c) in mixture.iter_mut().zip(cond.probabilities()) {
            *m += p * c;
        }
    }
    Ok(InterventionalProfile {
        marginal: DiscreteDistribution::from_masses(&mixture)?,
        conditionals,
    })
}

impl InterventionalProfile {
    /// `(1/|S|) Σ_v TV(p(ŷ), p(ŷ | do(s = v)))`.
    pub fn unfairness(&self) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.conditionals {
            total += total_variation(&self.marginal, c)?;
        }
        Ok(total / self.conditionals.len() as f64)
    }
}

/// Unfairness of `predictor` on `task` (the predictor is assumed to target
/// `task.target`; only `task.sensitive` enters the computation).
pub fn task_unfairness(
    predictor: &dyn Predictor,
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    task: Task,
    estimation: Estimation,
    rng: &mut SeededRng,
) -> Result<f64> {
    Task::new(space, task.target, task.sensitive)?;
    interventional_profile(predictor, source, space, task.sensitive, estimation, rng)?.unfairness()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairnessConfig {
    pub gbt: GbtConfig,
    /// Fresh draws per sensitive value.
    pub samples_per_value: usize,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            gbt: GbtConfig::default(),
            samples_per_value: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskUnfairness {
    pub target: usize,
    pub sensitive: usize,
    pub unfairness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub tasks: Vec<TaskUnfairness>,
    /// Test accuracy of the downstream model for each target factor.
    pub target_accuracy: Vec<f64>,
    /// Mean unfairness over all tasks.
    pub unfairness: f64,
    /// Mean test accuracy over target factors.
    pub gbt_accuracy: f64,
}

/// Trains one downstream model per target factor, audits it against every
/// other factor as the sensitive one, and aggregates.
pub fn unfairness_score(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    config: &FairnessConfig,
) -> Result<FairnessReport> {
    let tasks = enumerate_tasks(space)?;
    let k = space.num_factors();
    let mut results = Vec::with_capacity(tasks.len());
    let mut target_accuracy = Vec::with_capacity(k);
    for target in 0..k {
        let (model, acc) = train_downstream(source, space, target, &config.gbt)?;
        target_accuracy.push(acc);
        for task in tasks.iter().filter(|t| t.target == target) {
            let stream = 1_000 + (task.target * k + task.sensitive) as u64;
            let mut rng = rng_for(config.gbt.seed, stream);
            let labelled = LabelSpace {
                inner: &model,
                num_labels: space.cardinality(target),
            };
            let u = task_unfairness(
                &labelled,
                source,
                space,
                *task,
                Estimation::Sampled {
                    n: config.samples_per_value,
                },
                &mut rng,
            )?;
            results.push(TaskUnfairness {
                target,
                sensitive: task.sensitive,
                unfairness: u,
            });
        }
    }
    let unfairness = results.iter().map(|t| t.unfairness).sum::<f64>() / results.len() as f64;
    let gbt_accuracy = target_accuracy.iter().sum::<f64>() / k as f64;
    Ok(FairnessReport {
        tasks: results,
        target_accuracy,
        unfairness,
        gbt_accuracy,
    })
}

/// Widens a predictor's label set to a factor's full cardinality.
struct LabelSpace<'a, P: Predictor> {
    inner: &'a P,
    num_labels: usize,
}

impl<P: Predictor> Predictor for LabelSpace<'_, P> {
    fn num_labels(&self) -> usize {
        self.num_labels.max(self.inner.num_labels())
    }

    fn accumulate(&self, code: &[f64], weight: f64, mass: &mut [f64]) {
        self.inner.accumulate(code, weight, mass);
    }
}

//! The six disentanglement scores, each mapping a representation source to
//! a value in `[0, 1]`.

mod betavae;
mod dci;
mod factorvae;
mod mig;
mod sap;

use alloc::format;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::space::{sample_batch, FactorAssignment, FactorSpace, RepresentationSource};
use crate::{Dataset, Error, Result, SeededRng};

pub use betavae::betavae_score;
pub use dci::{dci_disentanglement, dci_from_importance, importance_matrix, DciScores};
pub use factorvae::factorvae_score;
pub use mig::{mig, mig_from_matrix, modularity, modularity_score};
pub use sap::{sap_from_datasets, sap_matrix, sap_score};

/// Scores may overshoot `[0, 1]` by estimator error up to this much before
/// it is treated as a bug.
pub const CLAMP_TOLERANCE: f64 = 0.02;

/// Sampling budget shared by all scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricBudget {
    pub num_train_points: usize,
    pub num_eval_points: usize,
    /// Batch size behind each BetaVAE training point and FactorVAE vote.
    pub batch_size: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for MetricBudget {
    fn default() -> Self {
        MetricBudget {
            num_train_points: 10_000,
            num_eval_points: 5_000,
            batch_size: 64,
            bins: crate::estimators::DEFAULT_BINS,
            seed: 0,
        }
    }
}

impl MetricBudget {
    pub fn validate(&self) -> Result<()> {
        if self.num_train_points == 0 || self.num_eval_points == 0 || self.batch_size == 0 {
            return Err(Error::domain("metric budget counts must be positive"));
        }
        if self.bins < 2 {
            return Err(Error::domain("metric budget needs at least 2 bins"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BetaVae,
    FactorVae,
    Mig,
    Modularity,
    Dci,
    Sap,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::BetaVae,
        Metric::FactorVae,
        Metric::Mig,
        Metric::Modularity,
        Metric::Dci,
        Metric::Sap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::BetaVae => "betavae",
            Metric::FactorVae => "factorvae",
            Metric::Mig => "mig",
            Metric::Modularity => "modularity",
            Metric::Dci => "dci",
            Metric::Sap => "sap",
        }
    }

    /// Computes this score, clamped into `[0, 1]`.
    pub fn evaluate(
        self,
        source: &dyn RepresentationSource,
        space: &FactorSpace,
        budget: &MetricBudget,
    ) -> Result<f64> {
        budget.validate()?;
        match self {
            Metric::BetaVae => betavae_score(source, space, budget),
            Metric::FactorVae => factorvae_score(source, space, budget),
            Metric::Mig => mig(source, space, budget),
            Metric::Modularity => modularity_score(source, space, budget),
            Metric::Dci => dci_disentanglement(source, space, budget).map(|d| d.disentanglement),
            Metric::Sap => sap_score(source, space, budget),
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub betavae: f64,
    pub factorvae: f64,
    pub mig: f64,
    pub modularity: f64,
    pub dci: f64,
    pub sap: f64,
}

impl DisentanglementReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::BetaVae => self.betavae,
            Metric::FactorVae => self.factorvae,
            Metric::Mig => self.mig,
            Metric::Modularity => self.modularity,
            Metric::Dci => self.dci,
            Metric::Sap => self.sap,
        }
    }
}

/// All six scores; fails on the first score that fails.
pub fn disentanglement_report(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<DisentanglementReport> {
    let mut values = [0.0; 6];
    for (v, m) in values.iter_mut().zip(Metric::ALL) {
        *v = m.evaluate(source, space, budget)?;
    }
    let [betavae, factorvae, mig, modularity, dci, sap] = values;
    Ok(DisentanglementReport {
        betavae,
        factorvae,
        mig,
        modularity,
        dci,
        sap,
    })
}

/// Clamps `value` into `[0, 1]`, logging any adjustment; overshoot beyond
/// [`CLAMP_TOLERANCE`] is an error.
pub fn clamp_score(name: &str, value: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        return Err(Error::OutOfRange {
            name: name.into(),
            value,
        });
    }
    let clamped = value.clamp(0.0, 1.0);
    if clamped != value {
        log::debug!("{name}: clamped {value} to {clamped}");
    }
    Ok(clamped)
}

fn metric_rng(budget: &MetricBudget, metric: Metric) -> SeededRng {
    crate::rng_for(budget.seed, metric.stream())
}

fn require_factors(space: &FactorSpace, at_least: usize, what: &str) -> Result<()> {
    if space.num_factors() < at_least {
        return Err(Error::domain(format!(
            "{what} needs at least {at_least} factors"
        )));
    }
    Ok(())
}

fn unconditioned(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    sample_batch(
        source,
        space,
        n,
        &FactorAssignment::free(space.num_factors()),
        rng,
    )
}

/// Draws a factor index uniformly and a value for it from its prior.
fn random_intervention(space: &FactorSpace, rng: &mut SeededRng) -> (usize, usize) {
    use rand::Rng;
    let k = rng.random_range(0..space.num_factors());
    (k, space.draw(k, rng))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Emits the same code for every input.
    pub struct ConstantSource(pub usize);

    impl RepresentationSource for ConstantSource {
        fn code_dim(&self) -> usize {
            self.0
        }

        fn sample_into(
            &self,
            space: &FactorSpace,
            fixed: &FactorAssignment,
            rng: &mut SeededRng,
            values: &mut [usize],
            code: &mut [f64],
        ) -> Result<()> {
            crate::space::sample_factors_into(space, fixed, rng, values);
            code.fill(0.25);
            Ok(())
        }
    }

    /// Applies a fixed permutation and positive per-dim scales to a base
    /// source's code.
    pub struct Remapped<S> {
        pub base: S,
        pub order: alloc::vec::Vec<usize>,
        pub scales: alloc::vec::Vec<f64>,
    }

    impl<S: RepresentationSource> RepresentationSource for Remapped<S> {
        fn code_dim(&self) -> usize {
            self.order.len()
        }

        fn sample_into(
            &self,
            space: &FactorSpace,
            fixed: &FactorAssignment,
            rng: &mut SeededRng,
            values: &mut [usize],
            code: &mut [f64],
        ) -> Result<()> {
            let mut raw = alloc::vec![0.0; self.base.code_dim()];
            self.base.sample_into(space, fixed, rng, values, &mut raw)?;
            for ((c, &j), s) in code.iter_mut().zip(&self.order).zip(&self.scales) {
                *c = s * raw[j];
            }
            Ok(())
        }
    }

    pub fn small_budget() -> MetricBudget {
        MetricBudget {
            num_train_points: 2000,
            num_eval_points: 1000,
            batch_size: 32,
            bins: 20,
            seed: 3,
        }
    }
}

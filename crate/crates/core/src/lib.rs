//! Auditing learned representations for disentanglement and downstream
//! fairness.
//!
//! The crate is `no_std` (with `alloc`) and purely algorithmic: every
//! estimate is a function of its inputs and an explicit seed. File formats,
//! orchestration and the command line live in the `fairlens` crate.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`space`] | factor spaces, assignments, datasets, seeded sampling |
//! | [`worlds`] | synthetic encoders and the `x = min(y, s)` counterexample world |
//! | [`estimators`] | discretization, entropy, mutual information, TV distance, Spearman |
//! | [`classifiers`] | gradient boosted trees, logistic regression, majority vote |
//! | [`metrics`] | BetaVAE, FactorVAE, MIG, Modularity, DCI Disentanglement, SAP |
//! | [`fairness`] | interventional prediction distributions and the unfairness score |
//! | [`analysis`] | k-NN adjusted scores, rank-correlation tables, model selection |

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod classifiers;
mod error;
pub mod estimators;
pub mod fairness;
mod math;
pub mod matrix;
pub mod metrics;
pub mod space;
pub mod worlds;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use space::{
    rng_for, sample_batch, sample_factors, Dataset, Factor, FactorAssignment, FactorSpace,
    RepresentationSource, SeededRng, RNG_ALGORITHM,
};

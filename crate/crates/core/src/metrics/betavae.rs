use alloc::vec;
use alloc::vec::Vec;

use super::{clamp_score, metric_rng, random_intervention, require_factors, Metric, MetricBudget};
use crate::classifiers::train_linear;
use crate::space::{sample_batch, FactorAssignment, FactorSpace, RepresentationSource};
use crate::{Matrix, Result, SeededRng};

/// Accuracy of a linear classifier predicting which factor was held fixed
/// from the mean absolute code difference between two batches.
pub fn betavae_score(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<f64> {
    require_factors(space, 2, "BetaVAE score")?;
    budget.validate()?;
    let mut rng = metric_rng(budget, Metric::BetaVae);
    let (x, y) = points(source, space, budget, budget.num_train_points, &mut rng)?;
    let model = train_linear(&x, &y, 0.0)?;
    let (tx, ty) = points(source, space, budget, budget.num_eval_points, &mut rng)?;
    clamp_score("betavae", model.accuracy(&tx, &ty)?)
}

fn points(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
    n: usize,
    rng: &mut SeededRng,
) -> Result<(Matrix, Vec<usize>)> {
    let d = source.code_dim();
    let mut features = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for row in features.chunks_exact_mut(d.max(1)) {
        let (k, value) = random_intervention(space, rng);
        let fixed = FactorAssignment::intervention(space.num_factors(), k, value);
        let a = sample_batch(source, space, budget.batch_size, &fixed, rng)?;
        let b = sample_batch(source, space, budget.batch_size, &fixed, rng)?;
        for (x, y) in a.codes().chunks_exact(d).zip(b.codes().chunks_exact(d)) {
            for ((f, u), v) in row.iter_mut().zip(x).zip(y) {
                *f += (u - v).abs();
            }
        }
        let inv = 1.0 / budget.batch_size as f64;
        row.iter_mut().for_each(|f| *f *= inv);
        labels.push(k);
    }
    Ok((Matrix::from_vec(n, d, features)?, labels))
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::worlds::{build_encoder, EncoderSpec};

    #[test]
    fn identity_two_factors() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(2), &space).unwrap();
        assert!(betavae_score(&enc, &space, &small_budget()).unwrap() >= 0.99);
    }

    #[test]
    fn constant_encoder_is_at_chance() {
        let space = FactorSpace::from_cardinalities(&[2, 3, 4]).unwrap();
        let s = betavae_score(&ConstantSource(3), &space, &small_budget()).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn random_linear_still_scores_high() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        let enc = build_encoder(&EncoderSpec::random_linear(5, 2), &space).unwrap();
        assert!(betavae_score(&enc, &space, &small_budget()).unwrap() >= 0.8);
    }

    #[test]
    fn needs_two_factors() {
        let space = FactorSpace::from_cardinalities(&[4]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(1), &space).unwrap();
        assert!(betavae_score(&enc, &space, &small_budget()).is_err());
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    clamp_score, metric_rng, random_intervention, require_factors, unconditioned, Metric,
    MetricBudget,
};
use crate::classifiers::majority_vote;
use crate::math;
use crate::space::{sample_batch, FactorAssignment, FactorSpace, RepresentationSource};
use crate::{Error, Result, SeededRng};

/// Dims whose global std falls below this fraction of the largest are
/// excluded from voting.
pub const PRUNE_FRACTION: f64 = 0.02;

/// Majority-vote accuracy of predicting the fixed factor from the code dim
/// of least normalized variance.
pub fn factorvae_score(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<f64> {
    require_factors(space, 2, "FactorVAE score")?;
    budget.validate()?;
    if budget.batch_size < 2 {
        return Err(Error::domain("FactorVAE score needs batch_size >= 2"));
    }
    let mut rng = metric_rng(budget, Metric::FactorVae);
    let global = unconditioned(source, space, budget.num_train_points, &mut rng)?;
    let std: Vec<f64> = (0..global.code_dim())
        .map(|j| math::sqrt(variance(&global.code_column(j))))
        .collect();
    let max = std.iter().copied().fold(0.0, f64::max);
    let active: Vec<usize> = (0..std.len())
        .filter(|&j| max > 0.0 && std[j] >= PRUNE_FRACTION * max)
        .collect();
    if active.is_empty() {
        return Err(Error::DegenerateRepresentation(format!(
            "all {} code dims collapsed",
            std.len()
        )));
    }
    log::debug!("factorvae: {} of {} dims active", active.len(), std.len());
    let train = votes(
        source,
        space,
        budget,
        &std,
        &active,
        budget.num_train_points,
        &mut rng,
    )?;
    let classifier = majority_vote(&train)?;
    let eval = votes(
        source,
        space,
        budget,
        &std,
        &active,
        budget.num_eval_points,
        &mut rng,
    )?;
    clamp_score("factorvae", classifier.accuracy_on(&eval)?)
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn votes(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
    std: &[f64],
    active: &[usize],
    n: usize,
    rng: &mut SeededRng,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(n);
    let mut column = vec![0.0; budget.batch_size];
    for _ in 0..n {
        let (k, value) = random_intervention(space, rng);
        let batch = sample_batch(
            source,
            space,
            budget.batch_size,
            &FactorAssignment::intervention(space.num_factors(), k, value),
            rng,
        )?;
        let mut best = active[0];
        let mut best_var = f64::INFINITY;
        for &j in active {
            for (i, c) in column.iter_mut().enumerate() {
                *c = batch.code_row(i)[j] / std[j];
            }
            let v = variance(&column);
            if v < best_var {
                best = j;
                best_var = v;
            }
        }
        out.push((best, k));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::worlds::{build_encoder, EncoderSpec};

    #[test]
    fn identity_encoder() {
        let space = FactorSpace::from_cardinalities(&[4, 3, 5]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(3), &space).unwrap();
        assert!(factorvae_score(&enc, &space, &small_budget()).unwrap() >= 0.99);
    }

    #[test]
    fn rotation_45_is_near_half() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        let enc = build_encoder(&EncoderSpec::rotation(45.0, vec![[0, 1]], 2), &space).unwrap();
        let s = factorvae_score(&enc, &space, &small_budget()).unwrap();
        assert!((s - 0.5).abs() <= 0.15, "{s}");
    }

    #[test]
    fn constant_encoder_is_degenerate() {
        let space = FactorSpace::from_cardinalities(&[2, 2]).unwrap();
        assert!(matches!(
            factorvae_score(&ConstantSource(2), &space, &small_budget()),
            Err(Error::DegenerateRepresentation(_))
        ));
    }

    #[test]
    fn collapsed_dims_never_win() {
        let space = FactorSpace::from_cardinalities(&[3, 3]).unwrap();
        // dims 2 and 3 are pure nuisance; scaling one far down prunes it
        let enc = Remapped {
            base: build_encoder(&EncoderSpec::identity(3), &space).unwrap(),
            order: vec![0, 1, 2],
            scales: vec![1.0, 1.0, 1e-4],
        };
        assert!(factorvae_score(&enc, &space, &small_budget()).unwrap() >= 0.99);
    }
}

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{clamp_score, metric_rng, require_factors, unconditioned, Metric, MetricBudget};
use crate::classifiers::{accuracy, gbt_feature_importance, train_gbt, GbtConfig};
use crate::math;
use crate::space::{FactorSpace, RepresentationSource};
use crate::{Dataset, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciScores {
    pub disentanglement: f64,
    pub completeness: f64,
    /// Mean test accuracy of the per-factor predictors.
    pub informativeness: f64,
    /// Code dims × factors.
    pub importance: Matrix,
}

/// Trains one GBT per factor on `num_train_points` draws (with default tree
/// settings) and scores its importance matrix; accuracy is measured on
/// `num_eval_points` further draws.
pub fn dci_disentanglement(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<DciScores> {
    let config = GbtConfig {
        train_size: budget.num_train_points.max(2),
        test_size: budget.num_eval_points,
        seed: budget.seed,
        ..GbtConfig::default()
    };
    dci_with(source, space, budget, &config)
}

/// As [`dci_disentanglement`] with explicit tree settings; the sample sizes
/// in `config` are ignored in favour of the budget's.
pub fn dci_with(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
    config: &GbtConfig,
) -> Result<DciScores> {
    require_factors(space, 2, "DCI")?;
    budget.validate()?;
    let mut rng = metric_rng(budget, Metric::Dci);
    let train = unconditioned(source, space, budget.num_train_points, &mut rng)?;
    let test = unconditioned(source, space, budget.num_eval_points, &mut rng)?;
    let (importance, accuracies) = importance_matrix(&train, &test, config)?;
    let disentanglement = dci_from_importance(&importance)?;
    let completeness = completeness_from_importance(&importance)?;
    let informativeness = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    log::info!(
        "dci: disentanglement {disentanglement:.4}, completeness {completeness:.4}, informativeness {informativeness:.4}"
    );
    Ok(DciScores {
        disentanglement,
        completeness,
        informativeness,
        importance,
    })
}

/// Column `k` holds the split-gain importances of a GBT predicting factor
/// `k`; also returns each model's accuracy on `test`.
pub fn importance_matrix(
    train: &Dataset,
    test: &Dataset,
    config: &GbtConfig,
) -> Result<(Matrix, Vec<f64>)> {
    let x = train.code_matrix();
    let tx = test.code_matrix();
    let mut r = Matrix::zeros(train.code_dim(), train.num_factors());
    let mut accuracies = Vec::with_capacity(train.num_factors());
    for k in 0..train.num_factors() {
        let model = train_gbt(&x, &train.factor_column(k), config)?;
        for (j, w) in gbt_feature_importance(&model).into_iter().enumerate() {
            r[(j, k)] = w;
        }
        accuracies.push(accuracy(&model, &tx, &test.factor_column(k))?);
    }
    Ok((r, accuracies))
}

fn check_importance(r: &Matrix) -> Result<f64> {
    if r.rows() == 0 || r.cols() < 2 {
        return Err(Error::domain(
            "importance matrix needs >= 1 code dim and >= 2 factors",
        ));
    }
    if r.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::domain(
            "importance entries must be finite and nonnegative",
        ));
    }
    let total: f64 = r.as_slice().iter().sum();
    if total <= 0.0 {
        return Err(Error::domain(format!("importance matrix sums to {total}")));
    }
    Ok(total)
}

/// Entropy of `weights / sum` in base `base`; an all-zero vector is
/// treated as uniform.
fn normalized_entropy(weights: &[f64], base: usize) -> f64 {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return 1.0;
    }
    let h: f64 = weights
        .iter()
        .map(|w| w / sum)
        .filter(|&p| p > 0.0)
        .map(|p| -p * math::ln(p))
        .sum();
    h / math::ln(base as f64)
}

/// `Σ_i ρ_i (1 − H_K(P_i))` over code dims `i`, where `P_i` is row `i`
/// normalized and `ρ_i` its share of the total importance.
pub fn dci_from_importance(r: &Matrix) -> Result<f64> {
    let total = check_importance(r)?;
    let k = r.cols();
    let score: f64 = (0..r.rows())
        .map(|i| {
            let row = r.row(i);
            let rho = row.iter().sum::<f64>() / total;
            rho * (1.0 - normalized_entropy(row, k))
        })
        .sum();
    clamp_score("dci", score)
}

/// The column-wise analogue: how concentrated each factor's importance is
/// on few code dims. A single code dim is complete by definition.
pub fn completeness_from_importance(r: &Matrix) -> Result<f64> {
    let total = check_importance(r)?;
    if r.rows() == 1 {
        return Ok(1.0);
    }
    let score: f64 = (0..r.cols())
        .map(|k| {
            let col = r.column(k);
            let rho = col.iter().sum::<f64>() / total;
            rho * (1.0 - normalized_entropy(&col, r.rows()))
        })
        .sum();
    clamp_score("dci_completeness", score)
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::worlds::{build_encoder, EncoderSpec};
    use alloc::vec;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(
            dci_from_importance(&m(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap(),
            1.0
        );
        assert!(
            dci_from_importance(&m(&[vec![0.5, 0.5], vec![0.5, 0.5]]))
                .unwrap()
                .abs()
                < 1e-12
        );
        let h = -(0.8 * libm::log2(0.8) + 0.2 * libm::log2(0.2));
        let d = dci_from_importance(&m(&[vec![0.8, 0.2], vec![0.2, 0.8]])).unwrap();
        assert!((d - (1.0 - h)).abs() < 1e-12);
        assert!((d - 0.2781).abs() < 5e-5);
    }

    #[test]
    fn zero_rows_carry_no_weight() {
        let d = dci_from_importance(&m(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(d, 1.0);
        assert!(dci_from_importance(&m(&[vec![0.0, 0.0]])).is_err());
        assert!(dci_from_importance(&m(&[vec![1.0]])).is_err());
    }

    #[test]
    fn completeness_examples() {
        assert_eq!(
            completeness_from_importance(&m(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap(),
            1.0
        );
        // one factor spread over both dims, the other concentrated
        let c = completeness_from_importance(&m(&[vec![0.5, 1.0], vec![0.5, 0.0]])).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn row_permutation_is_exactly_invariant() {
        let r = m(&[
            vec![0.7, 0.1, 0.0],
            vec![0.2, 0.6, 0.3],
            vec![0.1, 0.3, 0.7],
        ]);
        let p = m(&[
            vec![0.1, 0.3, 0.7],
            vec![0.7, 0.1, 0.0],
            vec![0.2, 0.6, 0.3],
        ]);
        assert!(
            (dci_from_importance(&r).unwrap() - dci_from_importance(&p).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn identity_encoder_is_disentangled() {
        let space = FactorSpace::from_cardinalities(&[4, 3]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(2), &space).unwrap();
        let s = dci_disentanglement(&enc, &space, &small_budget()).unwrap();
        assert!(s.disentanglement > 0.95, "{s:?}");
        assert!(s.informativeness > 0.99);
        let rot = build_encoder(&EncoderSpec::rotation(45.0, vec![[0, 1]], 2), &space).unwrap();
        let r = dci_disentanglement(&rot, &space, &small_budget()).unwrap();
        assert!(r.disentanglement < s.disentanglement - 0.3, "{r:?}");
    }
}

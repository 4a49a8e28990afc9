use alloc::vec::Vec;

use super::{clamp_score, metric_rng, require_factors, unconditioned, Metric, MetricBudget};
use crate::estimators::{mi_matrix, MIMatrix};
use crate::space::{FactorSpace, RepresentationSource};
use crate::{Error, Result};

/// Mutual information gap estimated on `num_train_points` draws.
pub fn mig(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<f64> {
    require_factors(space, 1, "MIG")?;
    budget.validate()?;
    let mut rng = metric_rng(budget, Metric::Mig);
    let data = unconditioned(source, space, budget.num_train_points, &mut rng)?;
    mig_from_matrix(&mi_matrix(&data, budget.bins)?)
}

/// Mean over factors of `(I₁ − I₂) / H(v_k)`, the normalized gap between
/// the two largest entries of each factor's column. A single code dim is
/// compared against zero. Factors with zero entropy are skipped.
pub fn mig_from_matrix(mi: &MIMatrix) -> Result<f64> {
    if mi.num_codes() == 0 {
        return Err(Error::domain("MIG needs at least one code dim"));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for k in 0..mi.num_factors() {
        let h = mi.factor_entropies[k];
        if h <= 0.0 {
            log::warn!("mig: factor {k} has zero entropy in the sample, skipped");
            continue;
        }
        let (first, second) = top_two(&mi.values.column(k));
        total += (first - second) / h;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateRepresentation(
            "every factor is constant in the sample".into(),
        ));
    }
    clamp_score("mig", total / used as f64)
}

fn top_two(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    (sorted[0], sorted.get(1).copied().unwrap_or(0.0))
}

/// Modularity estimated on `num_train_points` draws.
pub fn modularity_score(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<f64> {
    require_factors(space, 2, "modularity")?;
    budget.validate()?;
    let mut rng = metric_rng(budget, Metric::Modularity);
    let data = unconditioned(source, space, budget.num_train_points, &mut rng)?;
    modularity(&mi_matrix(&data, budget.bins)?)
}

/// Mean over code dims of `1 − Σ_{k≠k*} m_ik² / (θ_i² (N − 1))`, where
/// `θ_i` is the dim's largest MI entry; dims carrying no information score
/// 0.
pub fn modularity(mi: &MIMatrix) -> Result<f64> {
    let n = mi.num_factors();
    if n < 2 {
        return Err(Error::domain("modularity needs at least 2 factors"));
    }
    if mi.num_codes() == 0 {
        return Err(Error::domain("modularity needs at least one code dim"));
    }
    let scores: Vec<f64> = (0..mi.num_codes())
        .map(|i| {
            let row = mi.values.row(i);
            let (best, theta) =
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                    );
            if theta <= 0.0 {
                return 0.0;
            }
            let off: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != best)
                .map(|(_, v)| v * v)
                .sum();
            1.0 - off / (theta * theta * (n - 1) as f64)
        })
        .collect();
    clamp_score(
        "modularity",
        scores.iter().sum::<f64>() / scores.len() as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::worlds::{build_encoder, EncoderSpec};
    use crate::Matrix;
    use alloc::vec;

    fn matrix(rows: &[Vec<f64>], entropies: Vec<f64>) -> MIMatrix {
        MIMatrix {
            values: Matrix::from_rows(rows).unwrap(),
            factor_entropies: entropies,
        }
    }

    #[test]
    fn modularity_rows() {
        assert_eq!(
            modularity(&matrix(&[vec![1.0, 0.0]], vec![1.0, 1.0])).unwrap(),
            1.0
        );
        assert_eq!(
            modularity(&matrix(&[vec![0.3, 0.3]], vec![1.0, 1.0])).unwrap(),
            0.0
        );
        let m = modularity(&matrix(&[vec![0.8, 0.4]], vec![1.0, 1.0])).unwrap();
        assert!((m - 0.75).abs() < 1e-12);
        // an uninformative dim scores 0 and lowers the mean
        let m = modularity(&matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0])).unwrap();
        assert_eq!(m, 0.5);
        assert!(modularity(&matrix(&[vec![1.0]], vec![1.0])).is_err());
    }

    #[test]
    fn mig_gaps() {
        let mi = matrix(&[vec![1.0, 0.1], vec![0.2, 0.5]], vec![1.0, 2.0]);
        let expected = ((1.0 - 0.2) / 1.0 + (0.5 - 0.1) / 2.0) / 2.0;
        assert!((mig_from_matrix(&mi).unwrap() - expected).abs() < 1e-12);
        // one code dim: gap against zero
        let mi = matrix(&[vec![0.5]], vec![1.0]);
        assert_eq!(mig_from_matrix(&mi).unwrap(), 0.5);
        // zero-entropy factor skipped, all skipped is an error
        let mi = matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]], vec![1.0, 0.0]);
        assert_eq!(mig_from_matrix(&mi).unwrap(), 1.0);
        let mi = matrix(&[vec![0.0]], vec![0.0]);
        assert!(mig_from_matrix(&mi).is_err());
    }

    #[test]
    fn top_two_handles_ties_and_order() {
        assert_eq!(top_two(&[0.2, 0.9, 0.9]), (0.9, 0.9));
        assert_eq!(top_two(&[0.9, 0.1, 0.5]), (0.9, 0.5));
        assert_eq!(top_two(&[0.1, 0.5, 0.9]), (0.9, 0.5));
        assert_eq!(top_two(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn exact_copy_with_noise_dims() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        // dims 2..5 are independent nuisance
        let enc = build_encoder(&EncoderSpec::identity(5), &space).unwrap();
        let s = mig(&enc, &space, &small_budget()).unwrap();
        assert!(s > 0.9, "{s}");
    }

    #[test]
    fn independent_codes_score_near_zero() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        let enc = build_encoder(
            &EncoderSpec::collapse(vec![0, 1], EncoderSpec::identity(4)),
            &space,
        )
        .unwrap();
        let budget = MetricBudget {
            num_train_points: 10_000,
            ..small_budget()
        };
        let s = mig(&enc, &space, &budget).unwrap();
        assert!(s <= 0.05, "{s}");
        assert!(mig(&ConstantSource(2), &space, &budget).unwrap() == 0.0);
    }

    #[test]
    fn duplicated_factor_has_no_gap() {
        let space = FactorSpace::from_cardinalities(&[4, 4]).unwrap();
        let enc = Remapped {
            base: build_encoder(&EncoderSpec::identity(2), &space).unwrap(),
            order: vec![0, 0, 1, 1],
            scales: vec![1.0, 2.0, 1.0, 3.0],
        };
        let s = mig(&enc, &space, &small_budget()).unwrap();
        assert!(s < 1e-9, "{s}");
    }
}

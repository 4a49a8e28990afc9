//! Discretization, plug-in entropy and mutual information (in bits), total
//! variation distance and Spearman rank correlation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Dataset, Error, Matrix, Result};

/// Default number of equal-width bins for continuous code dims.
pub const DEFAULT_BINS: usize = 20;

const MI_EPS: f64 = 1e-9;

/// Equal-width binning over `[min, max]`; the top edge falls in the last
/// bin and a constant sequence maps to bin 0.
pub fn discretize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::domain("need at least 2 bins"));
    }
    if values.is_empty() {
        return Err(Error::domain("cannot discretize an empty sequence"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("NaN in values"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain("infinite value in values"));
    }
    if hi == lo {
        return Ok(vec![0; values.len()]);
    }
    let width = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            let b = math::floor((v - lo) / width * bins as f64) as usize;
            b.min(bins - 1)
        })
        .collect())
}

/// Shannon entropy in bits of a histogram, with `0 log 0 = 0`.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::domain("entropy of an all-zero histogram"));
    }
    Ok(entropy_of_sorted_counts(counts, total))
}

fn entropy_of_sorted_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * math::log2(p)
        })
        .sum();
    h.max(0.0)
}

fn histogram(labels: &[usize]) -> Vec<u64> {
    let size = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0u64; size];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Entropy in bits of a label sequence.
pub fn label_entropy(labels: &[usize]) -> Result<f64> {
    entropy(&histogram(labels))
}

/// Plug-in estimate `H(X) + H(Y) - H(X, Y)` in bits, clamped at 0.
///
/// Joint cells are summed in sorted count order, so the result is exactly
/// symmetric in its arguments.
pub fn mutual_information(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::domain("mutual information of empty sequences"));
    }
    let hx = label_entropy(x)?;
    let hy = label_entropy(y)?;
    let nx = x.iter().copied().max().unwrap_or(0) + 1;
    let ny = y.iter().copied().max().unwrap_or(0) + 1;
    let mut joint = vec![0u64; nx * ny];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * ny + b] += 1;
    }
    joint.retain(|&c| c > 0);
    joint.sort_unstable();
    let hxy = entropy_of_sorted_counts(&joint, x.len() as u64);
    Ok((hx + hy - hxy).max(0.0))
}

/// Pairwise mutual information between code dims (rows) and factors
/// (columns), in bits, plus each factor's entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIMatrix {
    pub values: Matrix,
    pub factor_entropies: Vec<f64>,
}

impl MIMatrix {
    pub fn num_codes(&self) -> usize {
        self.values.rows()
    }

    pub fn num_factors(&self) -> usize {
        self.values.cols()
    }
}

/// Mutual information of every (code dim, factor) pair; codes are binned
/// with `bins`, factors are used raw.
pub fn mi_matrix(dataset: &Dataset, bins: usize) -> Result<MIMatrix> {
    if dataset.len() < 2 {
        return Err(Error::domain(
            "mutual information matrix needs at least 2 rows",
        ));
    }
    let codes: Vec<Vec<usize>> = (0..dataset.code_dim())
        .map(|j| discretize(&dataset.code_column(j), bins))
        .collect::<Result<_>>()?;
    let factors: Vec<Vec<usize>> = (0..dataset.num_factors())
        .map(|k| dataset.factor_column(k))
        .collect();
    let factor_entropies = factors
        .iter()
        .map(|f| label_entropy(f))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Matrix::zeros(codes.len(), factors.len());
    for (j, c) in codes.iter().enumerate() {
        for (k, f) in factors.iter().enumerate() {
            let mi = mutual_information(c, f)?;
            debug_assert!(mi <= factor_entropies[k] + MI_EPS);
            values[(j, k)] = mi.min(factor_entropies[k]);
        }
    }
    Ok(MIMatrix {
        values,
        factor_entropies,
    })
}

/// A probability vector over labels `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    const TOLERANCE: f64 = 1e-9;

    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::domain("empty distribution"));
        }
        if probabilities.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::domain("negative or non-finite probability"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {total}")));
        }
        Ok(DiscreteDistribution(probabilities))
    }

    /// Normalizes nonnegative masses.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::domain("masses must have positive finite total"));
        }
        DiscreteDistribution::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::domain("all-zero counts"));
        }
        DiscreteDistribution::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn point_mass(len: usize, label: usize) -> Result<Self> {
        if label >= len {
            return Err(Error::domain("point-mass label out of range"));
        }
        let mut p = vec![0.0; len];
        p[label] = 1.0;
        Ok(DiscreteDistribution(p))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `½ Σ |p(a) - q(a)|`.
pub fn total_variation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!(
            "support sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let tv = 0.5
        * p.0
            .iter()
            .zip(&q.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Fractional ranks (1-based); tied values share their mean rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero rank variance".into()));
    }
    Ok((sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of fractional ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::domain(
            "Spearman correlation needs at least 3 points",
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::domain("NaN in Spearman input"));
    }
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{rng_for, sample_batch, FactorAssignment, FactorSpace};
    use crate::worlds::{build_encoder, EncoderSpec};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(&[0.0, 0.5, 1.0], 2).unwrap(), vec![0, 1, 1]);
        assert_eq!(discretize(&[3.0; 5], 4).unwrap(), vec![0; 5]);
        assert!(discretize(&[0.0, f64::NAN], 2).is_err());
        assert!(discretize(&[0.0, 1.0], 1).is_err());
        assert!(discretize(&[], 2).is_err());
    }

    #[test]
    fn discretize_uniform_draws_fill_bins_evenly() {
        let mut rng = rng_for(7, 0);
        let values: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let bins = discretize(&values, 20).unwrap();
        let counts = histogram(&bins);
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.05).abs() < 0.01);
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1, 1]).unwrap(), 1.0);
        assert_eq!(entropy(&[4, 0]).unwrap(), 0.0);
        assert_eq!(entropy(&[1, 1, 1, 1]).unwrap(), 2.0);
        assert!(entropy(&[0, 0]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let x = [0, 1, 0, 1, 1, 0];
        assert!((mutual_information(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mutual_information(&x, &[0; 6]).unwrap(), 0.0);
        assert!(mutual_information(&x, &[0; 5]).is_err());
        // joint counts [[2, 1], [1, 2]]
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 0, 1, 1];
        let oracle = {
            let p = [[2.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 6.0]];
            let mut mi = 0.0;
            for row in p {
                for v in row {
                    mi += v * libm::log2(v / 0.25);
                }
            }
            mi
        };
        let got = mutual_information(&a, &b).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.0817).abs() < 1e-4);
    }

    #[test]
    fn mi_matrix_on_identity_is_diagonal() {
        let space = FactorSpace::from_cardinalities(&[4, 3]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(2), &space).unwrap();
        let ds = sample_batch(
            &enc,
            &space,
            10_000,
            &FactorAssignment::free(2),
            &mut rng_for(1, 0),
        )
        .unwrap();
        let m = mi_matrix(&ds, 4).unwrap();
        for k in 0..2 {
            assert!((m.values[(k, k)] - m.factor_entropies[k]).abs() < 1e-9);
            assert!(m.values[(k, 1 - k)] < 0.01);
        }
        let order: Vec<usize> = (0..ds.len()).rev().collect();
        assert_eq!(mi_matrix(&ds.permuted_rows(&order), 4).unwrap(), m);
    }

    #[test]
    fn constant_code_dim_has_zero_row() {
        let ds = Dataset::new(
            1,
            2,
            vec![0, 1, 0, 1],
            vec![0.0, 5.0, 1.0, 5.0, 0.0, 5.0, 1.0, 5.0],
        )
        .unwrap();
        let m = mi_matrix(&ds, 20).unwrap();
        assert_eq!(m.values[(1, 0)], 0.0);
        assert!((m.values[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_variation_examples() {
        let half = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let third = DiscreteDistribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(total_variation(&half, &half).unwrap(), 0.0);
        let a = DiscreteDistribution::point_mass(3, 0).unwrap();
        let b = DiscreteDistribution::point_mass(3, 2).unwrap();
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
        assert!((total_variation(&half, &third).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(total_variation(&half, &a).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ties_get_mean_rank() {
        assert_eq!(
            fractional_ranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
    }

    fn distribution(len: usize) -> impl Strategy<Value = DiscreteDistribution> {
        proptest::collection::vec(0.0f64..1.0, len)
            .prop_filter("positive mass", |v| v.iter().sum::<f64>() > 1e-6)
            .prop_map(|v| DiscreteDistribution::from_masses(&v).unwrap())
    }

    proptest! {
        #[test]
        fn mi_symmetric_and_bounded(pairs in proptest::collection::vec((0usize..4, 0usize..5), 1..200)) {
            let (x, y): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let xy = mutual_information(&x, &y).unwrap();
            prop_assert_eq!(xy, mutual_information(&y, &x).unwrap());
            let hx = label_entropy(&x).unwrap();
            let hy = label_entropy(&y).unwrap();
            prop_assert!(xy >= 0.0);
            prop_assert!(xy <= hx.min(hy) + 1e-9);
        }

        #[test]
        fn tv_is_a_metric(p in distribution(4), q in distribution(4), r in distribution(4)) {
            let pq = total_variation(&p, &q).unwrap();
            prop_assert_eq!(pq, total_variation(&q, &p).unwrap());
            prop_assert!(total_variation(&p, &p).unwrap() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
            let pr = total_variation(&p, &r).unwrap();
            let rq = total_variation(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(rho) = spearman(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&rho));
                let ta: Vec<f64> = a.iter().map(|x| libm::exp(x / 50.0)).collect();
                let tb: Vec<f64> = b.iter().map(|x| x * x * x + 3.0 * x).collect();
                prop_assert_eq!(rho, spearman(&ta, &tb).unwrap());
            }
        }
    }
}

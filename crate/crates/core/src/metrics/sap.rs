use alloc::vec;
use alloc::vec::Vec;

use super::{clamp_score, metric_rng, require_factors, unconditioned, Metric, MetricBudget};
use crate::space::{FactorSpace, RepresentationSource};
use crate::{Dataset, Error, Matrix, Result};

/// A one-vs-rest threshold rule on a single code dim: predicts `class` when
/// `value > threshold` (or `<=` if `!above`).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stump {
    class: usize,
    threshold: f64,
    above: bool,
}

impl Stump {
    fn fires(&self, v: f64) -> bool {
        (v > self.threshold) == self.above
    }
}

/// Mean per-factor gap between the two best single-dim stump scores.
pub fn sap_score(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    budget: &MetricBudget,
) -> Result<f64> {
    require_factors(space, 1, "SAP")?;
    budget.validate()?;
    if source.code_dim() < 2 {
        return Err(Error::domain("SAP needs at least 2 code dims"));
    }
    let mut rng = metric_rng(budget, Metric::Sap);
    let train = unconditioned(source, space, budget.num_train_points, &mut rng)?;
    let eval = unconditioned(source, space, budget.num_eval_points, &mut rng)?;
    sap_from_datasets(&train, &eval, &space.cardinalities())
}

/// SAP on realized samples; `cardinalities` bound the class search.
pub fn sap_from_datasets(train: &Dataset, eval: &Dataset, cardinalities: &[usize]) -> Result<f64> {
    if train.code_dim() < 2 {
        return Err(Error::domain("SAP needs at least 2 code dims"));
    }
    let s = sap_matrix(train, eval, cardinalities)?;
    let mut total = 0.0;
    for k in 0..s.cols() {
        let mut col = s.column(k);
        col.sort_unstable_by(|a, b| b.total_cmp(a));
        total += col[0] - col[1];
    }
    clamp_score("sap", total / s.cols() as f64)
}

/// `S[j][k]`: balanced accuracy on `eval` of the stump on dim `j` chosen on
/// `train` to best separate one class of factor `k` from the rest.
pub fn sap_matrix(train: &Dataset, eval: &Dataset, cardinalities: &[usize]) -> Result<Matrix> {
    if train.code_dim() != eval.code_dim() || train.num_factors() != eval.num_factors() {
        return Err(Error::domain("train and eval samples disagree in shape"));
    }
    if cardinalities.len() != train.num_factors() {
        return Err(Error::domain("cardinalities do not match factor count"));
    }
    let mut s = Matrix::zeros(train.code_dim(), train.num_factors());
    for j in 0..train.code_dim() {
        let x = train.code_column(j);
        let ex = eval.code_column(j);
        for (k, &card) in cardinalities.iter().enumerate() {
            let score = match best_stump(&x, &train.factor_column(k), card) {
                Some(stump) => balanced_accuracy(&ex, &eval.factor_column(k), stump),
                None => 0.5,
            };
            s[(j, k)] = score;
        }
    }
    Ok(s)
}

/// `(TPR + TNR) / 2` of the stump's one-vs-rest rule; a side with no
/// examples counts as chance.
fn balanced_accuracy(x: &[f64], labels: &[usize], stump: Stump) -> f64 {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&v, &l) in x.iter().zip(labels) {
        let fires = stump.fires(v);
        if l == stump.class {
            pos += 1;
            tp += fires as usize;
        } else {
            neg += 1;
            tn += !fires as usize;
        }
    }
    let rate = |hit: usize, n: usize| if n == 0 { 0.5 } else { hit as f64 / n as f64 };
    (rate(tp, pos) + rate(tn, neg)) / 2.0
}

/// Exhaustive search over classes, midpoint thresholds and directions by
/// training balanced accuracy; ties keep the first candidate found (lower
/// class, lower threshold, `above` first). `None` if the dim is constant
/// or only one class is present.
fn best_stump(x: &[f64], labels: &[usize], cardinality: usize) -> Option<Stump> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut totals = vec![0usize; cardinality];
    for &l in labels {
        totals[l.min(cardinality - 1)] += 1;
    }
    if totals.iter().filter(|&&t| t > 0).count() < 2 {
        return None;
    }
    let mut best: Option<(f64, Stump)> = None;
    for (class, &pos) in totals.iter().enumerate() {
        let neg = n - pos;
        if pos == 0 || neg == 0 {
            continue;
        }
        // counts at or below the current cut
        let (mut pos_below, mut neg_below) = (0usize, 0usize);
        for w in 0..n - 1 {
            let i = order[w];
            if labels[i] == class {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            let (lo, hi) = (x[i], x[order[w + 1]]);
            if lo == hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            // predicting `class` above the cut
            let above =
                ((pos - pos_below) as f64 / pos as f64 + neg_below as f64 / neg as f64) / 2.0;
            let below = 1.0 - above;
            for (score, dir) in [(above, true), (below, false)] {
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((
                        score,
                        Stump {
                            class,
                            threshold,
                            above: dir,
                        },
                    ));
                }
            }
        }
    }
    best.map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::worlds::{build_encoder, EncoderSpec};

    #[test]
    fn identity_binary_factors() {
        let space = FactorSpace::from_cardinalities(&[2, 2, 2]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(3), &space).unwrap();
        let s = sap_score(&enc, &space, &small_budget()).unwrap();
        assert!((s - 0.5).abs() < 0.05, "{s}");
    }

    #[test]
    fn duplicated_factor_has_no_gap() {
        let space = FactorSpace::from_cardinalities(&[3, 3]).unwrap();
        let enc = Remapped {
            base: build_encoder(&EncoderSpec::identity(2), &space).unwrap(),
            order: vec![0, 0, 1, 1],
            scales: vec![1.0, 2.0, 0.5, 1.0],
        };
        assert!(sap_score(&enc, &space, &small_budget()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_encoder() {
        let space = FactorSpace::from_cardinalities(&[3, 2]).unwrap();
        let s = sap_score(&ConstantSource(3), &space, &small_budget()).unwrap();
        assert!(s.abs() <= 0.05);
    }

    #[test]
    fn one_code_dim_is_rejected() {
        let space = FactorSpace::from_cardinalities(&[3]).unwrap();
        let enc = build_encoder(&EncoderSpec::identity(1), &space).unwrap();
        assert!(sap_score(&enc, &space, &small_budget()).is_err());
    }

    #[test]
    fn stump_search_by_hand() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1, 1, 0, 0];
        let s = best_stump(&x, &y, 2).unwrap();
        assert_eq!(
            s,
            Stump {
                class: 0,
                threshold: 1.5,
                above: true
            }
        );
        assert_eq!(balanced_accuracy(&x, &y, s), 1.0);
        assert!(best_stump(&[1.0, 1.0], &[0, 1], 2).is_none());
        assert!(best_stump(&[0.0, 1.0], &[1, 1], 2).is_none());
    }
}

//! One-vs-rest gradient boosted regression trees on the logistic loss.
//!
//! Each class gets its own additive ensemble of depth-limited regression
//! trees fit to the negative gradient, with Newton leaf values. Splits are
//! found by exact search over presorted feature columns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fairness::Predictor;
use crate::math;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            num_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            train_size: 10_000,
            test_size: 5_000,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 || self.max_depth == 0 {
            return Err(Error::domain("num_trees and max_depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::domain(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.train_size < 2 || self.test_size == 0 {
            return Err(Error::domain("train_size must be >= 2 and test_size >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Ensemble {
    init: f64,
    trees: Vec<Tree>,
}

impl Ensemble {
    fn score(&self, x: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// A trained one-vs-rest boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    classes: Vec<usize>,
    num_features: usize,
    ensembles: Vec<Ensemble>,
    gains: Vec<f64>,
    loss_history: Vec<f64>,
}

impl GbtModel {
    /// Sorted distinct training labels.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Summed one-vs-rest training loss before the first tree and after each
    /// boosting round.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Label with the highest class score; ties go to the lower class.
    pub fn predict_one(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, e) in self.ensembles.iter().enumerate() {
            let s = e.score(x);
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        self.classes[best]
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        if features.rows() > 0 && features.cols() != self.num_features {
            return Err(Error::domain(format!(
                "model expects {} features, got {}",
                self.num_features,
                features.cols()
            )));
        }
        Ok((0..features.rows())
            .map(|i| self.predict_one(features.row(i)))
            .collect())
    }

    /// Total split gain per feature, normalized to sum 1; uniform if the
    /// ensemble never split.
    pub fn feature_importance(&self) -> Vec<f64> {
        normalize_importance(&self.gains)
    }
}

fn normalize_importance(gains: &[f64]) -> Vec<f64> {
    let total: f64 = gains.iter().sum();
    if total > 0.0 {
        gains.iter().map(|g| g / total).collect()
    } else {
        vec![1.0 / gains.len() as f64; gains.len()]
    }
}

impl Predictor for GbtModel {
    fn num_labels(&self) -> usize {
        self.classes.last().map_or(0, |c| c + 1)
    }

    fn accumulate(&self, code: &[f64], weight: f64, mass: &mut [f64]) {
        mass[self.predict_one(code)] += weight;
    }
}

/// Accuracy of `model` on `(features, labels)`.
pub fn accuracy(model: &GbtModel, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != features.rows() || labels.is_empty() {
        return Err(Error::domain(
            "accuracy needs equally many, nonzero rows and labels",
        ));
    }
    let pred = model.predict(features)?;
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn binary_loss(score: f64, y: f64) -> f64 {
    math::softplus(score) - y * score
}

struct Grower<'a> {
    features: &'a Matrix,
    /// Row indices per feature, sorted by that feature's value.
    sorted: &'a [Vec<u32>],
    max_depth: usize,
    gains: &'a mut [f64],
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    /// Fits a regression tree to `residual` and assigns each row its leaf id.
    fn grow(&mut self, residual: &[f64], leaf_of: &mut [u32]) -> (Tree, Vec<Vec<u32>>) {
        let mut nodes = Vec::new();
        let mut leaves: Vec<Vec<u32>> = Vec::new();
        let lists: Vec<Vec<u32>> = self.sorted.to_vec();
        let mut member = vec![false; residual.len()];
        self.grow_node(residual, lists, 0, &mut nodes, &mut leaves, &mut member);
        for (leaf_id, rows) in leaves.iter().enumerate() {
            for &r in rows {
                leaf_of[r as usize] = leaf_id as u32;
            }
        }
        (Tree { nodes }, leaves)
    }

    fn best_split(&self, residual: &[f64], lists: &[Vec<u32>]) -> Option<SplitChoice> {
        let rows = &lists[0];
        let n = rows.len();
        if n < 2 {
            return None;
        }
        let total: f64 = rows.iter().map(|&r| residual[r as usize]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<SplitChoice> = None;
        for (f, list) in lists.iter().enumerate() {
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                let r = list[i] as usize;
                left_sum += residual[r];
                let a = self.features[(r, f)];
                let b = self.features[(list[i + 1] as usize, f)];
                if a == b {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                if gain > best.as_ref().map_or(1e-12, |s| s.gain) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow_node(
        &mut self,
        residual: &[f64],
        lists: Vec<Vec<u32>>,
        depth: usize,
        nodes: &mut Vec<Node>,
        leaves: &mut Vec<Vec<u32>>,
        member: &mut [bool],
    ) -> usize {
        let id = nodes.len();
        let split = if depth < self.max_depth {
            self.best_split(residual, &lists)
        } else {
            None
        };
        let Some(split) = split else {
            nodes.push(Node::Leaf(leaves.len() as f64));
            leaves.push(lists.into_iter().next().unwrap_or_default());
            return id;
        };
        self.gains[split.feature] += split.gain;
        nodes.push(Node::Leaf(0.0));
        for &r in &lists[split.feature] {
            member[r as usize] = self.features[(r as usize, split.feature)] <= split.threshold;
        }
        let (mut left_lists, mut right_lists) = (Vec::new(), Vec::new());
        for list in &lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| member[r as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);
        let left = self.grow_node(residual, left_lists, depth + 1, nodes, leaves, member);
        let right = self.grow_node(residual, right_lists, depth + 1, nodes, leaves, member);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Trains one-vs-rest boosted trees on `features` (n x d) and `labels`.
pub fn train_gbt(features: &Matrix, labels: &[usize], config: &GbtConfig) -> Result<GbtModel> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n {
        return Err(Error::domain(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if n < 2 || d == 0 {
        return Err(Error::domain("need at least 2 rows and 1 feature"));
    }
    if config.num_trees == 0 || config.max_depth == 0 {
        return Err(Error::domain("num_trees and max_depth must be at least 1"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
        return Err(Error::domain("learning_rate outside (0, 1]"));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite feature"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateModel(format!(
            "single class {:?} in training labels",
            classes.first()
        )));
    }

    let sorted: Vec<Vec<u32>> = (0..d)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| features[(a as usize, f)].total_cmp(&features[(b as usize, f)]));
            idx
        })
        .collect();

    let mut gains = vec![0.0; d];
    let mut ensembles = Vec::with_capacity(classes.len());
    let mut history = vec![0.0; config.num_trees + 1];
    let mut leaf_of = vec![0u32; n];
    let mut residual = vec![0.0; n];
    for &class in &classes {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { 0.0 })
            .collect();
        let positives: f64 = y.iter().sum();
        let init = math::ln(positives / (n as f64 - positives));
        let mut score = vec![init; n];
        let mut loss: f64 = score.iter().zip(&y).map(|(&s, &t)| binary_loss(s, t)).sum();
        history[0] += loss;
        let mut trees = Vec::with_capacity(config.num_trees);
        for round in 0..config.num_trees {
            for i in 0..n {
                residual[i] = y[i] - math::sigmoid(score[i]);
            }
            let mut grower = Grower {
                features,
                sorted: &sorted,
                max_depth: config.max_depth,
                gains: &mut gains,
            };
            let (mut tree, leaves) = grower.grow(&residual, &mut leaf_of);
            let steps: Vec<f64> = leaves
                .iter()
                .map(|rows| leaf_step(rows, &score, &y, config.learning_rate))
                .collect();
            for node in &mut tree.nodes {
                if let Node::Leaf(v) = node {
                    *v = steps[*v as usize];
                }
            }
            for i in 0..n {
                score[i] += steps[leaf_of[i] as usize];
            }
            let next: f64 = score.iter().zip(&y).map(|(&s, &t)| binary_loss(s, t)).sum();
            debug_assert!(
                next <= loss * (1.0 + 1e-12) + 1e-9,
                "boosting loss increased"
            );
            loss = next;
            history[round + 1] += loss;
            trees.push(tree);
        }
        ensembles.push(Ensemble { init, trees });
    }
    Ok(GbtModel {
        classes,
        num_features: d,
        ensembles,
        gains,
        loss_history: history,
    })
}

/// Shrunken Newton step for one leaf, halved until it does not increase
/// the leaf's loss.
fn leaf_step(rows: &[u32], score: &[f64], y: &[f64], learning_rate: f64) -> f64 {
    let (mut g, mut h) = (0.0, 0.0);
    for &r in rows {
        let p = math::sigmoid(score[r as usize]);
        g += y[r as usize] - p;
        h += p * (1.0 - p);
    }
    if h <= 1e-12 || g == 0.0 {
        return 0.0;
    }
    let base: f64 = rows
        .iter()
        .map(|&r| binary_loss(score[r as usize], y[r as usize]))
        .sum();
    let mut step = learning_rate * g / h;
    for _ in 0..40 {
        let moved: f64 = rows
            .iter()
            .map(|&r| binary_loss(score[r as usize] + step, y[r as usize]))
            .sum();
        if moved <= base {
            return step;
        }
        step *= 0.5;
    }
    0.0
}

/// Predicts labels for every row; argmax of class scores, ties toward the
/// lower class index.
pub fn gbt_predict(model: &GbtModel, features: &Matrix) -> Result<Vec<usize>> {
    model.predict(features)
}

pub fn gbt_feature_importance(model: &GbtModel) -> Vec<f64> {
    model.feature_importance()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::rng_for;
    use rand::Rng;

    fn matrix(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn separable_1d() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let model = train_gbt(&matrix(&x), &y, &GbtConfig::default()).unwrap();
        let test: Vec<Vec<f64>> = vec![vec![-5.0], vec![3.0], vec![25.5], vec![100.0]];
        assert_eq!(model.predict(&matrix(&test)).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(accuracy(&model, &matrix(&x), &y).unwrap(), 1.0);
    }

    fn xor_data(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng_for(seed, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a = usize::from(rng.random::<bool>());
            let b = usize::from(rng.random::<bool>());
            rows.push(vec![a as f64, b as f64]);
            labels.push(a ^ b);
        }
        (matrix(&rows), labels)
    }

    #[test]
    fn learns_xor() {
        let (x, y) = xor_data(1000, 1);
        let model = train_gbt(&x, &y, &GbtConfig::default()).unwrap();
        let (tx, ty) = xor_data(1000, 2);
        assert!(accuracy(&model, &tx, &ty).unwrap() >= 0.95);
    }

    #[test]
    fn independent_labels_give_chance() {
        let mut rng = rng_for(3, 0);
        let gen = |rng: &mut crate::SeededRng, n: usize| {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<bool>())).collect();
            (matrix(&rows), labels)
        };
        let (x, y) = gen(&mut rng, 2000);
        let model = train_gbt(&x, &y, &GbtConfig::default()).unwrap();
        let (tx, ty) = gen(&mut rng, 4000);
        let acc = accuracy(&model, &tx, &ty).unwrap();
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            train_gbt(&x, &[1, 1], &GbtConfig::default()),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn empty_input_predicts_nothing() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        let model = train_gbt(&x, &[0, 1], &GbtConfig::default()).unwrap();
        assert!(model.predict(&Matrix::zeros(0, 1)).unwrap().is_empty());
    }

    #[test]
    fn replicated_point_predicts_majority_everywhere() {
        let x = matrix(&vec![vec![0.5, 0.5]; 10]);
        let y = [2, 2, 2, 0, 2, 2, 0, 2, 2, 2];
        let model = train_gbt(&x, &y, &GbtConfig::default()).unwrap();
        let probe = matrix(&[vec![-3.0, 9.0], vec![0.5, 0.5], vec![7.0, -1.0]]);
        assert_eq!(model.predict(&probe).unwrap(), vec![2, 2, 2]);
        assert_eq!(model.feature_importance(), vec![0.5, 0.5]);
    }

    #[test]
    fn deterministic_and_monotone_loss() {
        let (x, y) = xor_data(500, 5);
        let cfg = GbtConfig {
            num_trees: 30,
            ..GbtConfig::default()
        };
        let a = train_gbt(&x, &y, &cfg).unwrap();
        let b = train_gbt(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        for w in a.loss_history().windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn multiclass_loss_is_monotone() {
        let mut rng = rng_for(8, 0);
        let rows: Vec<Vec<f64>> = (0..600)
            .map(|_| vec![rng.random::<f64>() * 4.0, rng.random::<f64>()])
            .collect();
        let y: Vec<usize> = rows
            .iter()
            .map(|r| {
                if rng.random::<f64>() < 0.2 {
                    rng.random_range(0..4)
                } else {
                    r[0] as usize
                }
            })
            .collect();
        let model = train_gbt(&matrix(&rows), &y, &GbtConfig::default()).unwrap();
        assert_eq!(model.classes(), &[0, 1, 2, 3]);
        for w in model.loss_history().windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn importance_tracks_the_informative_feature() {
        let mut rng = rng_for(4, 0);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![f64::from(rng.random_range(0..3u8)), rng.random::<f64>()])
            .collect();
        let y: Vec<usize> = rows.iter().map(|r| r[0] as usize).collect();
        let model = train_gbt(&matrix(&rows), &y, &GbtConfig::default()).unwrap();
        let imp = model.feature_importance();
        assert!(imp[0] >= 0.95, "{imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn importance_is_spread_when_nothing_is_informative() {
        let mut max_entry = 0.0;
        for seed in 0..5 {
            let mut rng = rng_for(100 + seed, 0);
            let rows: Vec<Vec<f64>> = (0..1000)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let y: Vec<usize> = (0..1000)
                .map(|_| usize::from(rng.random::<bool>()))
                .collect();
            let model = train_gbt(&matrix(&rows), &y, &GbtConfig::default()).unwrap();
            max_entry += model.feature_importance()[0].max(model.feature_importance()[1]) / 5.0;
        }
        assert!(max_entry <= 0.7, "{max_entry}");
    }

    #[test]
    fn one_feature_has_full_importance() {
        let x = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let model = train_gbt(&x, &[0, 0, 1, 1], &GbtConfig::default()).unwrap();
        assert_eq!(model.feature_importance(), vec![1.0]);
    }
}

//! The two-variable counterexample world: independent Bernoulli target `y`
//! and sensitive `s`, observed only through `x = min(y, s)`.
//!
//! Even the Bayes-optimal classifier `p(ŷ | x) = p(y | x)` on `x` violates
//! demographic parity whenever `0 < q, b < 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fairness::Predictor;
use crate::space::{
    sample_factors_into, Factor, FactorAssignment, FactorSpace, RepresentationSource,
};
use crate::{Error, Result, SeededRng};

/// How a classifier turns the posterior `p(y = 1 | x)` into a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// `ŷ ~ p(y | x)`.
    Stochastic,
    /// `ŷ = argmax_y p(y | x)`, ties to label 0.
    Argmax,
}

/// `p(s = 1) = q`, `p(y = 1) = b`, both strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleWorld {
    q: f64,
    b: f64,
}

/// `cells[y][s][x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTable {
    pub cells: [[[f64; 2]; 2]; 2],
}

impl JointTable {
    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().flatten().sum()
    }

    pub fn p_x(&self, x: usize) -> f64 {
        (0..2)
            .flat_map(|y| (0..2).map(move |s| (y, s)))
            .map(|(y, s)| self.cells[y][s][x])
            .sum()
    }

    pub fn p_s(&self, s: usize) -> f64 {
        (0..2)
            .flat_map(|y| (0..2).map(move |x| (y, x)))
            .map(|(y, x)| self.cells[y][s][x])
            .sum()
    }

    pub fn p_y(&self, y: usize) -> f64 {
        self.cells[y].iter().flatten().sum()
    }

    /// `p(x | s)`.
    pub fn p_x_given_s(&self, x: usize, s: usize) -> f64 {
        (self.cells[0][s][x] + self.cells[1][s][x]) / self.p_s(s)
    }
}

impl CounterexampleWorld {
    pub fn new(q: f64, b: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) || !(b > 0.0 && b < 1.0) {
            return Err(Error::domain(format!(
                "need 0 < q < 1 and 0 < b < 1, got q={q}, b={b}"
            )));
        }
        Ok(CounterexampleWorld { q, b })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Joint over `(y, s, x)`; cells with `x != min(y, s)` are zero.
    pub fn joint(&self) -> JointTable {
        let mut cells = [[[0.0; 2]; 2]; 2];
        for y in 0..2 {
            for s in 0..2 {
                let py = if y == 1 { self.b } else { 1.0 - self.b };
                let ps = if s == 1 { self.q } else { 1.0 - self.q };
                cells[y][s][y.min(s)] = py * ps;
            }
        }
        JointTable { cells }
    }

    /// `[p(y = 1 | x = 0), p(y = 1 | x = 1)]` from the joint.
    pub fn posterior(&self) -> [f64; 2] {
        let joint = self.joint();
        [0, 1].map(|x| (joint.cells[1][0][x] + joint.cells[1][1][x]) / joint.p_x(x))
    }

    /// `p(y = 1 | x = 0) = b(1 - q) / (1 - qb)`.
    pub fn closed_form_posterior_x0(&self) -> f64 {
        self.b * (1.0 - self.q) / (1.0 - self.q * self.b)
    }

    /// `[p(ŷ = 1 | x = 0), p(ŷ = 1 | x = 1)]`.
    pub fn prediction_rule(&self, mode: PredictionMode) -> [f64; 2] {
        let post = self.posterior();
        match mode {
            PredictionMode::Stochastic => post,
            PredictionMode::Argmax => post.map(|p| if p > 0.5 { 1.0 } else { 0.0 }),
        }
    }

    /// `p(ŷ = 1 | s)`, summing `p(ŷ = 1 | x) p(x | s)` over `x`.
    pub fn p_pred_given_s(&self, mode: PredictionMode, s: usize) -> f64 {
        let joint = self.joint();
        let rule = self.prediction_rule(mode);
        (0..2).map(|x| rule[x] * joint.p_x_given_s(x, s)).sum()
    }

    /// `p(ŷ = 1)`.
    pub fn p_pred(&self, mode: PredictionMode) -> f64 {
        let joint = self.joint();
        let rule = self.prediction_rule(mode);
        (0..2).map(|x| rule[x] * joint.p_x(x)).sum()
    }

    /// Demographic-parity gap `p(ŷ = 1 | s = 1) - p(ŷ = 1 | s = 0)`.
    pub fn dp_gap(&self, mode: PredictionMode) -> f64 {
        self.p_pred_given_s(mode, 1) - self.p_pred_given_s(mode, 0)
    }

    /// Stochastic-mode gap in closed form, `b(1 - b) / (1 - qb)`.
    pub fn closed_form_stochastic_gap(&self) -> f64 {
        self.b * (1.0 - self.b) / (1.0 - self.q * self.b)
    }

    /// Stochastic-mode `p(ŷ = 1) - p(ŷ = 1 | s = 0) = bq(1 - b) / (1 - qb)`.
    pub fn closed_form_stochastic_shift_s0(&self) -> f64 {
        self.b * self.q * (1.0 - self.b) / (1.0 - self.q * self.b)
    }

    /// Stochastic-mode unfairness in closed form, `b(1 - b) / (2(1 - qb))`.
    pub fn closed_form_stochastic_unfairness(&self) -> f64 {
        0.5 * self.closed_form_stochastic_gap()
    }

    /// Mean over `s` of `TV(p(ŷ), p(ŷ | s))`.
    pub fn unfairness(&self, mode: PredictionMode) -> f64 {
        let marginal = self.p_pred(mode);
        // TV between two Bernoulli laws is the gap between their means.
        0.5 * ((marginal - self.p_pred_given_s(mode, 0)).abs()
            + (marginal - self.p_pred_given_s(mode, 1)).abs())
    }

    /// Monte Carlo estimate of [`Self::unfairness`] from `n` draws of
    /// `(y, s)` with `ŷ` sampled from the prediction rule.
    pub fn monte_carlo_unfairness(
        &self,
        mode: PredictionMode,
        n: usize,
        rng: &mut SeededRng,
    ) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("need at least one sample"));
        }
        let rule = self.prediction_rule(mode);
        let mut count = [0usize; 2];
        let mut positive = [0usize; 2];
        for _ in 0..n {
            let y = usize::from(rng.random::<f64>() < self.b);
            let s = usize::from(rng.random::<f64>() < self.q);
            let x = y.min(s);
            let yhat = rng.random::<f64>() < rule[x];
            count[s] += 1;
            positive[s] += usize::from(yhat);
        }
        if count.contains(&0) {
            return Err(Error::domain("a sensitive value was never drawn"));
        }
        let marginal = (positive[0] + positive[1]) as f64 / n as f64;
        let tv: f64 = (0..2)
            .map(|s| (marginal - positive[s] as f64 / count[s] as f64).abs())
            .sum();
        Ok(0.5 * tv)
    }

    /// The world as a factor space: factor 0 is `y`, factor 1 is `s`.
    pub fn factor_space(&self) -> FactorSpace {
        FactorSpace::with_priors(
            vec![Factor::new("y", 2), Factor::new("s", 2)],
            vec![vec![1.0 - self.b, self.b], vec![1.0 - self.q, self.q]],
        )
        .expect("0 < q, b < 1")
    }

    /// Predictor reading `x` from code dim 0.
    pub fn bayes_classifier(&self, mode: PredictionMode) -> BayesClassifier {
        BayesClassifier {
            rule: self.prediction_rule(mode),
        }
    }
}

/// One-dimensional code `[min(y, s)]` over [`CounterexampleWorld::factor_space`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MinMixing;

impl RepresentationSource for MinMixing {
    fn code_dim(&self) -> usize {
        1
    }

    fn sample_into(
        &self,
        space: &FactorSpace,
        fixed: &FactorAssignment,
        rng: &mut SeededRng,
        values: &mut [usize],
        code: &mut [f64],
    ) -> Result<()> {
        sample_factors_into(space, fixed, rng, values);
        self.mean_code(values, code);
        Ok(())
    }

    fn mean_code(&self, values: &[usize], code: &mut [f64]) -> bool {
        code[0] = values[0].min(values[1]) as f64;
        true
    }
}

/// `p(ŷ = 1 | x)` lookup over binary `x` in code dim 0.
#[derive(Debug, Clone, Copy)]
pub struct BayesClassifier {
    rule: [f64; 2],
}

impl Predictor for BayesClassifier {
    fn num_labels(&self) -> usize {
        2
    }

    fn accumulate(&self, code: &[f64], weight: f64, mass: &mut [f64]) {
        let x = usize::from(code[0] >= 0.5);
        mass[1] += weight * self.rule[x];
        mass[0] += weight * (1.0 - self.rule[x]);
    }
}

/// `(q, b, closed-form gap, enumerated gap)` over the grid `{0.1, …, 0.9}²`.
pub fn gap_grid() -> Vec<(f64, f64, f64, f64)> {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut out = Vec::with_capacity(81);
    for &q in &grid {
        for &b in &grid {
            let w = CounterexampleWorld::new(q, b).expect("grid is interior");
            out.push((
                q,
                b,
                w.closed_form_stochastic_gap(),
                w.dp_gap(PredictionMode::Stochastic),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::rng_for;

    /// Independent oracle: enumerate `(y, s)` directly, no joint table.
    fn enumerate(q: f64, b: f64, mode: PredictionMode) -> (f64, f64, f64) {
        let py = [1.0 - b, b];
        let ps = [1.0 - q, q];
        // posterior p(y=1 | x) by Bayes on the four outcomes
        let mut num = [0.0; 2];
        let mut den = [0.0; 2];
        for (y, &p_y) in py.iter().enumerate() {
            for (s, &p_s) in ps.iter().enumerate() {
                let x = if y < s { y } else { s };
                den[x] += p_y * p_s;
                if y == 1 {
                    num[x] += p_y * p_s;
                }
            }
        }
        let mut rule = [num[0] / den[0], num[1] / den[1]];
        if mode == PredictionMode::Argmax {
            rule = rule.map(|p| if p > 0.5 { 1.0 } else { 0.0 });
        }
        let mut cond = [0.0; 2];
        let mut marg = 0.0;
        for (s, (c, &p_s)) in cond.iter_mut().zip(&ps).enumerate() {
            for (y, &p_y) in py.iter().enumerate() {
                let x = if y < s { y } else { s };
                *c += p_y * rule[x];
                marg += p_y * p_s * rule[x];
            }
        }
        (cond[0], cond[1], marg)
    }

    #[test]
    fn validation_is_strict() {
        assert!(CounterexampleWorld::new(0.0, 0.5).is_err());
        assert!(CounterexampleWorld::new(0.5, 1.0).is_err());
        assert!(CounterexampleWorld::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn joint_sums_to_one_and_matches_marginals() {
        for &(q, b) in &[(0.5, 0.5), (0.1, 0.9), (0.37, 0.02)] {
            let w = CounterexampleWorld::new(q, b).unwrap();
            let j = w.joint();
            assert!((j.total() - 1.0).abs() < 1e-15);
            assert!((j.p_s(1) - q).abs() < 1e-15);
            assert!((j.p_y(1) - b).abs() < 1e-15);
            assert!((j.p_x(1) - q * b).abs() < 1e-15);
            assert!((j.p_x(0) - ((1.0 - q) + q * (1.0 - b))).abs() < 1e-15);
            for y in 0..2 {
                for s in 0..2 {
                    assert_eq!(j.cells[y][s][1 - y.min(s)], 0.0);
                }
            }
        }
        let j = CounterexampleWorld::new(0.5, 0.5).unwrap().joint();
        assert_eq!(j.cells[1][1][1], 0.25);
    }

    #[test]
    fn posterior_values() {
        let w = CounterexampleWorld::new(0.5, 0.5).unwrap();
        let post = w.posterior();
        assert_eq!(post[1], 1.0);
        assert!((post[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((post[0] - w.closed_form_posterior_x0()).abs() < 1e-15);
        let near_one = CounterexampleWorld::new(0.5, 1.0 - 1e-9).unwrap();
        assert!(near_one.posterior()[0] > 1.0 - 1e-8);
    }

    #[test]
    fn gaps_and_unfairness_at_half() {
        let w = CounterexampleWorld::new(0.5, 0.5).unwrap();
        assert!((w.dp_gap(PredictionMode::Stochastic) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.p_pred_given_s(PredictionMode::Argmax, 1) - 0.5).abs() < 1e-15);
        assert_eq!(w.p_pred_given_s(PredictionMode::Argmax, 0), 0.0);
        assert!((w.dp_gap(PredictionMode::Argmax) - 0.5).abs() < 1e-15);
        assert!((w.unfairness(PredictionMode::Stochastic) - 1.0 / 6.0).abs() < 1e-15);
        assert!((w.unfairness(PredictionMode::Argmax) - 0.25).abs() < 1e-15);
        assert!((w.closed_form_stochastic_shift_s0() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn grid_matches_enumeration_oracle() {
        for (q, b, closed, enumerated) in gap_grid() {
            let (c0, c1, marg) = enumerate(q, b, PredictionMode::Stochastic);
            assert!((closed - enumerated).abs() < 1e-12);
            assert!((c1 - c0 - enumerated).abs() < 1e-12);
            assert!(enumerated > 0.0);
            let w = CounterexampleWorld::new(q, b).unwrap();
            // Bayes calibration: p(ŷ=1) = b.
            assert!((w.p_pred(PredictionMode::Stochastic) - b).abs() < 1e-12);
            assert!((marg - b).abs() < 1e-12);
            assert!((marg - c0 - w.closed_form_stochastic_shift_s0()).abs() < 1e-12);
            let u = 0.5 * ((marg - c0).abs() + (marg - c1).abs());
            assert!((w.unfairness(PredictionMode::Stochastic) - u).abs() < 1e-12);
            assert!((w.closed_form_stochastic_unfairness() - u).abs() < 1e-12);
            let (a0, a1, am) = enumerate(q, b, PredictionMode::Argmax);
            assert!((w.dp_gap(PredictionMode::Argmax) - (a1 - a0)).abs() < 1e-12);
            let ua = 0.5 * ((am - a0).abs() + (am - a1).abs());
            assert!((w.unfairness(PredictionMode::Argmax) - ua).abs() < 1e-12);
        }
    }

    #[test]
    fn limits() {
        let w = CounterexampleWorld::new(0.5, 0.999_999).unwrap();
        assert!(w.dp_gap(PredictionMode::Stochastic) < 1e-5);
        // As q -> 0 the marginal collapses onto p(ŷ | s = 0), so that side of
        // the average vanishes; the rare s = 1 side keeps b(1 - b) / 2.
        let small_q = CounterexampleWorld::new(1e-9, 0.5).unwrap();
        let mode = PredictionMode::Stochastic;
        assert!((small_q.p_pred(mode) - small_q.p_pred_given_s(mode, 0)).abs() < 1e-8);
        assert!(small_q.closed_form_stochastic_shift_s0() < 1e-8);
        assert!((small_q.unfairness(mode) - 0.125).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_agrees() {
        let w = CounterexampleWorld::new(0.5, 0.5).unwrap();
        let mut rng = rng_for(42, 0);
        let mc = w
            .monte_carlo_unfairness(PredictionMode::Stochastic, 100_000, &mut rng)
            .unwrap();
        assert!((mc - 1.0 / 6.0).abs() < 0.01, "{mc}");
        let mc = w
            .monte_carlo_unfairness(PredictionMode::Argmax, 100_000, &mut rng)
            .unwrap();
        assert!((mc - 0.25).abs() < 0.01, "{mc}");
    }
}

//! Ground-truth factor spaces, (partial) factor assignments, code datasets
//! and the seeded sampling primitives every other module builds on.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Identifier of [`SeededRng`], recorded in reports.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9";

/// A generator for `seed`, on an independent ChaCha `stream`.
///
/// Streams let one seed feed several sub-computations (one per metric, one
/// per downstream task) without their draws interleaving.
pub fn rng_for(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PRIOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub cardinality: usize,
}

impl Factor {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Factor {
            name: name.into(),
            cardinality,
        }
    }
}

#[derive(Deserialize)]
struct FactorSpaceRepr {
    factors: Vec<Factor>,
    #[serde(default)]
    priors: Option<Vec<Vec<f64>>>,
}

/// Independent discrete factors of variation with a factorized prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorSpaceRepr")]
pub struct FactorSpace {
    factors: Vec<Factor>,
    priors: Vec<Vec<f64>>,
    #[serde(skip)]
    cumulative: Vec<Vec<f64>>,
}

impl TryFrom<FactorSpaceRepr> for FactorSpace {
    type Error = Error;
    fn try_from(repr: FactorSpaceRepr) -> Result<Self> {
        match repr.priors {
            Some(p) => FactorSpace::with_priors(repr.factors, p),
            None => FactorSpace::uniform(repr.factors),
        }
    }
}

impl FactorSpace {
    pub fn uniform(factors: Vec<Factor>) -> Result<Self> {
        let priors = factors
            .iter()
            .map(|f| vec![1.0 / f.cardinality.max(1) as f64; f.cardinality])
            .collect();
        FactorSpace::with_priors(factors, priors)
    }

    /// Uniform space with factors named `f0, f1, ...`.
    pub fn from_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        FactorSpace::uniform(
            cardinalities
                .iter()
                .enumerate()
                .map(|(i, &c)| Factor::new(format!("f{i}"), c))
                .collect(),
        )
    }

    pub fn with_priors(factors: Vec<Factor>, priors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::domain("factor space needs at least one factor"));
        }
        if priors.len() != factors.len() {
            return Err(Error::domain("one prior per factor required"));
        }
        let mut names = BTreeSet::new();
        for (f, p) in factors.iter().zip(&priors) {
            if f.cardinality < 2 {
                return Err(Error::domain(format!(
                    "factor {} has cardinality {} (< 2)",
                    f.name, f.cardinality
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::domain(format!("duplicate factor name {}", f.name)));
            }
            if p.len() != f.cardinality {
                return Err(Error::domain(format!(
                    "prior of {} has {} entries, cardinality is {}",
                    f.name,
                    p.len(),
                    f.cardinality
                )));
            }
            if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::domain(format!(
                    "prior of {} has negative mass",
                    f.name
                )));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > PRIOR_TOLERANCE {
                return Err(Error::domain(format!(
                    "prior of {} sums to {total}",
                    f.name
                )));
            }
        }
        let cumulative = priors
            .iter()
            .map(|p| {
                let mut acc = 0.0;
                let mut c: Vec<f64> = p
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                // Last positive-mass label absorbs rounding so u < 1 always lands.
                if let Some(last) = p.iter().rposition(|&x| x > 0.0) {
                    for v in &mut c[last..] {
                        *v = f64::INFINITY;
                    }
                }
                c
            })
            .collect();
        Ok(FactorSpace {
            factors,
            priors,
            cumulative,
        })
    }

    #[inline]
    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    #[inline]
    pub fn cardinality(&self, k: usize) -> usize {
        self.factors[k].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cardinality).collect()
    }

    pub fn prior(&self, k: usize) -> &[f64] {
        &self.priors[k]
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    /// Number of joint assignments, saturating.
    pub fn num_assignments(&self) -> usize {
        self.factors
            .iter()
            .fold(1usize, |acc, f| acc.saturating_mul(f.cardinality))
    }

    pub(crate) fn draw(&self, k: usize, rng: &mut SeededRng) -> usize {
        let u: f64 = rng.random();
        self.cumulative[k]
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.factors[k].cardinality - 1)
    }

    pub(crate) fn check_assignment(&self, fixed: &FactorAssignment) -> Result<()> {
        if fixed.values.len() != self.num_factors() || fixed.fixed.len() != self.num_factors() {
            return Err(Error::domain(format!(
                "assignment has {} slots, space has {} factors",
                fixed.values.len(),
                self.num_factors()
            )));
        }
        for (k, (&v, &is_fixed)) in fixed.values.iter().zip(&fixed.fixed).enumerate() {
            if is_fixed && v >= self.cardinality(k) {
                return Err(Error::domain(format!(
                    "factor {} fixed to {v}, cardinality {}",
                    self.factors[k].name,
                    self.cardinality(k)
                )));
            }
        }
        Ok(())
    }
}

/// Per-factor labels together with a mask of which slots are fixed.
///
/// Free slots carry placeholder values until a sampler completes them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorAssignment {
    pub values: Vec<usize>,
    pub fixed: Vec<bool>,
}

impl FactorAssignment {
    /// All `num_factors` slots free.
    pub fn free(num_factors: usize) -> Self {
        FactorAssignment {
            values: vec![0; num_factors],
            fixed: vec![false; num_factors],
        }
    }

    /// A fully fixed assignment.
    pub fn complete(values: Vec<usize>) -> Self {
        let fixed = vec![true; values.len()];
        FactorAssignment { values, fixed }
    }

    /// Free except for `factor = value`.
    pub fn intervention(num_factors: usize, factor: usize, value: usize) -> Self {
        let mut a = FactorAssignment::free(num_factors);
        a.fix(factor, value);
        a
    }

    pub fn fix(&mut self, factor: usize, value: usize) {
        self.values[factor] = value;
        self.fixed[factor] = true;
    }

    pub fn is_fixed(&self, factor: usize) -> bool {
        self.fixed[factor]
    }
}

/// Completes `fixed` into `out`: fixed slots copied, free slots drawn from
/// their priors in factor order.
pub fn sample_factors_into(
    space: &FactorSpace,
    fixed: &FactorAssignment,
    rng: &mut SeededRng,
    out: &mut [usize],
) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = if fixed.fixed[k] {
            fixed.values[k]
        } else {
            space.draw(k, rng)
        };
    }
}

/// Draws a complete assignment respecting every fixed slot.
pub fn sample_factors(
    space: &FactorSpace,
    fixed: &FactorAssignment,
    rng: &mut SeededRng,
) -> Result<FactorAssignment> {
    space.check_assignment(fixed)?;
    let mut values = vec![0; space.num_factors()];
    sample_factors_into(space, fixed, rng, &mut values);
    Ok(FactorAssignment {
        values,
        fixed: fixed.fixed.clone(),
    })
}

/// A conditional sampler of codes given (partial) factor assignments; the
/// composition of the unknown mixing with an encoder.
pub trait RepresentationSource: Sync {
    fn code_dim(&self) -> usize;

    /// Completes `fixed` into `values` and writes a code for it into `code`.
    ///
    /// `fixed` has already been validated against `space`.
    fn sample_into(
        &self,
        space: &FactorSpace,
        fixed: &FactorAssignment,
        rng: &mut SeededRng,
        values: &mut [usize],
        code: &mut [f64],
    ) -> Result<()>;

    /// Noise-free code for a complete assignment, when the source has one.
    /// Returns `false` if unsupported.
    fn mean_code(&self, _values: &[usize], _code: &mut [f64]) -> bool {
        false
    }
}

impl<T: RepresentationSource + ?Sized> RepresentationSource for &T {
    fn code_dim(&self) -> usize {
        (**self).code_dim()
    }
    fn sample_into(
        &self,
        space: &FactorSpace,
        fixed: &FactorAssignment,
        rng: &mut SeededRng,
        values: &mut [usize],
        code: &mut [f64],
    ) -> Result<()> {
        (**self).sample_into(space, fixed, rng, values, code)
    }
    fn mean_code(&self, values: &[usize], code: &mut [f64]) -> bool {
        (**self).mean_code(values, code)
    }
}

/// Row-aligned factor labels (n x k) and codes (n x d).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    len: usize,
    num_factors: usize,
    code_dim: usize,
    factors: Vec<usize>,
    codes: Vec<f64>,
}

impl Dataset {
    pub fn new(
        num_factors: usize,
        code_dim: usize,
        factors: Vec<usize>,
        codes: Vec<f64>,
    ) -> Result<Self> {
        if num_factors == 0 || !factors.len().is_multiple_of(num_factors) {
            return Err(Error::domain("factor matrix shape mismatch"));
        }
        let len = factors.len() / num_factors;
        if codes.len() != len * code_dim {
            return Err(Error::domain("factor and code row counts differ"));
        }
        Ok(Dataset {
            len,
            num_factors,
            code_dim,
            factors,
            codes,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    #[inline]
    pub fn factor_row(&self, i: usize) -> &[usize] {
        &self.factors[i * self.num_factors..(i + 1) * self.num_factors]
    }

    #[inline]
    pub fn code_row(&self, i: usize) -> &[f64] {
        &self.codes[i * self.code_dim..(i + 1) * self.code_dim]
    }

    pub fn factor_column(&self, k: usize) -> Vec<usize> {
        (0..self.len)
            .map(|i| self.factors[i * self.num_factors + k])
            .collect()
    }

    pub fn code_column(&self, j: usize) -> Vec<f64> {
        (0..self.len)
            .map(|i| self.codes[i * self.code_dim + j])
            .collect()
    }

    /// Codes as an n x d feature matrix.
    pub fn code_matrix(&self) -> crate::Matrix {
        crate::Matrix::from_vec(self.len, self.code_dim, self.codes.clone())
            .expect("dataset shape is consistent")
    }

    pub fn codes(&self) -> &[f64] {
        &self.codes
    }

    /// Rows reordered by `order` (a permutation of `0..len`).
    pub fn permuted_rows(&self, order: &[usize]) -> Dataset {
        let mut factors = Vec::with_capacity(self.factors.len());
        let mut codes = Vec::with_capacity(self.codes.len());
        for &i in order {
            factors.extend_from_slice(self.factor_row(i));
            codes.extend_from_slice(self.code_row(i));
        }
        Dataset {
            factors,
            codes,
            ..*self
        }
    }
}

/// Draws `n` independent rows from `source` under the partial assignment
/// `fixed`.
pub fn sample_batch(
    source: &dyn RepresentationSource,
    space: &FactorSpace,
    n: usize,
    fixed: &FactorAssignment,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    space.check_assignment(fixed)?;
    let k = space.num_factors();
    let d = source.code_dim();
    let mut factors = vec![0; n * k];
    let mut codes = vec![0.0; n * d];
    for (values, code) in factors
        .chunks_exact_mut(k)
        .zip(codes.chunks_exact_mut(d.max(1)))
    {
        source.sample_into(space, fixed, rng, values, &mut code[..d])?;
    }
    if codes.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("source produced a non-finite code"));
    }
    Ok(Dataset {
        len: n,
        num_factors: k,
        code_dim: d,
        factors,
        codes,
    })
}

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::space::{sample_factors_into, FactorAssignment, FactorSpace, RepresentationSource};
use crate::{Error, Matrix, Result, SeededRng};

/// A synthetic encoder of tunable disentanglement quality.
///
/// The base kinds start from the identity code (factor `i` rescaled to
/// `[-1, 1]` in dim `i`, extra dims independent standard-normal nuisance)
/// and apply a linear map; `Noisy` and `Collapse` wrap another spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Identity {
        code_dim: usize,
    },
    /// Output dim `i` reads identity dim `perm[i]`.
    Permuted {
        perm: Vec<usize>,
    },
    /// Rotates each listed dim pair by `angle` degrees.
    Rotation {
        angle: f64,
        pairs: Vec<[usize; 2]>,
        code_dim: usize,
    },
    /// Seeded Haar-random orthogonal mixing of all dims.
    RandomLinear {
        seed: u64,
        code_dim: usize,
    },
    /// Adds i.i.d. `N(0, sigma^2)` noise to every dim of `base`.
    Noisy {
        sigma: f64,
        base: Box<EncoderSpec>,
    },
    /// Drops the listed dims of `base`.
    Collapse {
        dropped: Vec<usize>,
        base: Box<EncoderSpec>,
    },
}

impl EncoderSpec {
    pub fn identity(code_dim: usize) -> Self {
        EncoderSpec::Identity { code_dim }
    }

    pub fn rotation(angle: f64, pairs: Vec<[usize; 2]>, code_dim: usize) -> Self {
        EncoderSpec::Rotation {
            angle,
            pairs,
            code_dim,
        }
    }

    pub fn random_linear(seed: u64, code_dim: usize) -> Self {
        EncoderSpec::RandomLinear { seed, code_dim }
    }

    pub fn noisy(sigma: f64, base: EncoderSpec) -> Self {
        EncoderSpec::Noisy {
            sigma,
            base: Box::new(base),
        }
    }

    pub fn collapse(dropped: Vec<usize>, base: EncoderSpec) -> Self {
        EncoderSpec::Collapse {
            dropped,
            base: Box::new(base),
        }
    }

    /// Dimension of the produced code.
    pub fn code_dim(&self) -> usize {
        match self {
            EncoderSpec::Identity { code_dim }
            | EncoderSpec::Rotation { code_dim, .. }
            | EncoderSpec::RandomLinear { code_dim, .. } => *code_dim,
            EncoderSpec::Permuted { perm } => perm.len(),
            EncoderSpec::Noisy { base, .. } => base.code_dim(),
            EncoderSpec::Collapse { dropped, base } => {
                base.code_dim().saturating_sub(dropped.len())
            }
        }
    }

    /// Short human-readable description, e.g. `noisy(0.1, rotation(45))`.
    pub fn label(&self) -> String {
        format!("{self}")
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Identity { .. } => write!(f, "identity"),
            EncoderSpec::Permuted { perm } => write!(f, "permuted({perm:?})"),
            EncoderSpec::Rotation { angle, .. } => write!(f, "rotation({angle})"),
            EncoderSpec::RandomLinear { seed, .. } => write!(f, "random_linear({seed})"),
            EncoderSpec::Noisy { sigma, base } => write!(f, "noisy({sigma}, {base})"),
            EncoderSpec::Collapse { dropped, base } => write!(f, "collapse({dropped:?}, {base})"),
        }
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Linear(Matrix),
    Noise(f64),
    Keep(Vec<usize>),
}

/// A [`RepresentationSource`] built from an [`EncoderSpec`].
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    cardinalities: Vec<usize>,
    base_dim: usize,
    stages: Vec<Stage>,
    code_dim: usize,
}

/// Validates `spec` against `space` and compiles it into an [`Encoder`].
pub fn build_encoder(spec: &EncoderSpec, space: &FactorSpace) -> Result<Encoder> {
    let mut stages = Vec::new();
    let base_dim = compile(spec, space.num_factors(), &mut stages)?;
    let code_dim = stages.iter().fold(base_dim, |d, s| match s {
        Stage::Keep(keep) => keep.len(),
        _ => d,
    });
    Ok(Encoder {
        spec: spec.clone(),
        cardinalities: space.cardinalities(),
        base_dim,
        stages,
        code_dim,
    })
}

fn check_base_dim(code_dim: usize, num_factors: usize) -> Result<()> {
    if code_dim < num_factors {
        return Err(Error::domain(format!(
            "code_dim {code_dim} is smaller than the {num_factors} factors"
        )));
    }
    Ok(())
}

/// Appends the stages of `spec` and returns the identity-code dimension.
fn compile(spec: &EncoderSpec, num_factors: usize, stages: &mut Vec<Stage>) -> Result<usize> {
    match spec {
        EncoderSpec::Identity { code_dim } => {
            check_base_dim(*code_dim, num_factors)?;
            Ok(*code_dim)
        }
        EncoderSpec::Permuted { perm } => {
            let d = perm.len();
            check_base_dim(d, num_factors)?;
            let distinct: BTreeSet<_> = perm.iter().copied().collect();
            if distinct.len() != d || perm.iter().any(|&p| p >= d) {
                return Err(Error::domain(format!("{perm:?} is not a permutation")));
            }
            let mut m = Matrix::zeros(d, d);
            for (i, &p) in perm.iter().enumerate() {
                m[(i, p)] = 1.0;
            }
            stages.push(Stage::Linear(m));
            Ok(d)
        }
        EncoderSpec::Rotation {
            angle,
            pairs,
            code_dim,
        } => {
            let d = *code_dim;
            check_base_dim(d, num_factors)?;
            if !(0.0..=90.0).contains(angle) {
                return Err(Error::domain(format!(
                    "rotation angle {angle} outside [0, 90]"
                )));
            }
            let mut seen = BTreeSet::new();
            for &[a, b] in pairs {
                if a >= d || b >= d || a == b || !seen.insert(a) || !seen.insert(b) {
                    return Err(Error::domain(format!(
                        "rotation pairs {pairs:?} must be disjoint and within {d} dims"
                    )));
                }
            }
            let (sin, cos) = math::sin_cos(angle.to_radians());
            let mut m = Matrix::identity(d);
            for &[a, b] in pairs {
                m[(a, a)] = cos;
                m[(a, b)] = -sin;
                m[(b, a)] = sin;
                m[(b, b)] = cos;
            }
            stages.push(Stage::Linear(m));
            Ok(d)
        }
        EncoderSpec::RandomLinear { seed, code_dim } => {
            check_base_dim(*code_dim, num_factors)?;
            stages.push(Stage::Linear(random_orthogonal(*code_dim, *seed)));
            Ok(*code_dim)
        }
        EncoderSpec::Noisy { sigma, base } => {
            if !sigma.is_finite() || *sigma < 0.0 {
                return Err(Error::domain(format!(
                    "noise sigma {sigma} must be finite and >= 0"
                )));
            }
            let d = compile(base, num_factors, stages)?;
            stages.push(Stage::Noise(*sigma));
            Ok(d)
        }
        EncoderSpec::Collapse { dropped, base } => {
            let base_dim = compile(base, num_factors, stages)?;
            let current = base.code_dim();
            let drop: BTreeSet<_> = dropped.iter().copied().collect();
            if drop.len() != dropped.len() || dropped.iter().any(|&j| j >= current) {
                return Err(Error::domain(format!(
                    "collapse dims {dropped:?} must be distinct and within {current} dims"
                )));
            }
            let keep: Vec<usize> = (0..current).filter(|j| !drop.contains(j)).collect();
            if keep.is_empty() {
                return Err(Error::domain("collapse must leave at least one dim"));
            }
            stages.push(Stage::Keep(keep));
            Ok(base_dim)
        }
    }
}

/// Haar-random orthogonal matrix: Gram-Schmidt QR of a seeded Gaussian
/// matrix, with column signs fixed by the diagonal of R.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for prev in done.iter() {
            let proj: f64 = prev.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            for (c, p) in col.iter_mut().zip(prev) {
                *c -= proj * p;
            }
        }
        let norm = math::sqrt(col.iter().map(|v| v * v).sum());
        // The norm is R's (positive) diagonal entry, so no extra sign flip is needed.
        for v in col.iter_mut() {
            *v /= norm;
        }
    }
    let mut m = Matrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

impl Encoder {
    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    /// Encodes a complete assignment. Without an rng the code is noise-free:
    /// nuisance dims are 0 and noise stages are skipped.
    pub fn encode_into(&self, values: &[usize], mut rng: Option<&mut SeededRng>, out: &mut [f64]) {
        let mut cur = vec![0.0; self.base_dim];
        for (j, c) in cur.iter_mut().enumerate() {
            *c = match values.get(j) {
                Some(&v) if j < self.cardinalities.len() => {
                    2.0 * v as f64 / (self.cardinalities[j] - 1) as f64 - 1.0
                }
                _ => match rng.as_deref_mut() {
                    Some(r) => StandardNormal.sample(r),
                    None => 0.0,
                },
            };
        }
        let mut next = Vec::new();
        for stage in &self.stages {
            match stage {
                Stage::Linear(m) => {
                    next.clear();
                    next.resize(m.rows(), 0.0);
                    m.mul_vec_into(&cur, &mut next);
                    core::mem::swap(&mut cur, &mut next);
                }
                Stage::Noise(sigma) => {
                    if let Some(r) = rng.as_deref_mut() {
                        if *sigma > 0.0 {
                            for c in &mut cur {
                                let z: f64 = StandardNormal.sample(r);
                                *c += sigma * z;
                            }
                        }
                    }
                }
                Stage::Keep(keep) => {
                    next.clear();
                    next.extend(keep.iter().map(|&j| cur[j]));
                    core::mem::swap(&mut cur, &mut next);
                }
            }
        }
        out.copy_from_slice(&cur);
    }
}

impl RepresentationSource for Encoder {
    fn code_dim(&self) -> usize {
        self.code_dim
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
        self.encode_into(values, Some(rng), code);
        Ok(())
    }

    fn mean_code(&self, values: &[usize], code: &mut [f64]) -> bool {
        self.encode_into(values, None, code);
        true
    }
}

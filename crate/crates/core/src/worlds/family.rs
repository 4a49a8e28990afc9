use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::Error;

use super::EncoderSpec;

/// Named collections of synthetic encoders spanning disentangled to fully
/// entangled representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity, a permutation, rotations, random mixing, noise grades and a
    /// collapse (a dozen or so sources).
    Standard,
    /// Rotation x noise grid, several random mixings and collapses (50+).
    Extended,
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "standard" => Ok(Family::Standard),
            "extended" => Ok(Family::Extended),
            other => Err(Error::domain(format!("unknown encoder family {other:?}"))),
        }
    }
}

fn consecutive_pairs(d: usize) -> Vec<[usize; 2]> {
    (0..d / 2).map(|i| [2 * i, 2 * i + 1]).collect()
}

/// `(id, spec)` pairs for `num_factors` factors. `angles` are the rotation
/// angles in degrees; `seed` offsets every random-mixing seed.
pub fn encoder_family(
    num_factors: usize,
    family: Family,
    angles: &[f64],
    seed: u64,
) -> Vec<(String, EncoderSpec)> {
    let d = num_factors;
    let pairs = consecutive_pairs(d);
    let mut out: Vec<(String, EncoderSpec)> = Vec::new();
    let mut push = |id: String, spec: EncoderSpec| out.push((id, spec));
    match family {
        Family::Standard => {
            push("identity".into(), EncoderSpec::identity(d));
            push(
                "permuted".into(),
                EncoderSpec::Permuted {
                    perm: (0..d).rev().collect(),
                },
            );
            for &a in angles {
                push(
                    format!("rotation_{a}"),
                    EncoderSpec::rotation(a, pairs.clone(), d),
                );
            }
            for i in 0..2 {
                push(
                    format!("random_linear_{i}"),
                    EncoderSpec::random_linear(seed + i, d),
                );
            }
            for sigma in [0.1, 0.3] {
                push(
                    format!("noisy_{sigma}_identity"),
                    EncoderSpec::noisy(sigma, EncoderSpec::identity(d)),
                );
            }
            push(
                "noisy_0.3_rotation_45".into(),
                EncoderSpec::noisy(0.3, EncoderSpec::rotation(45.0, pairs.clone(), d)),
            );
            if d >= 2 {
                let dropped: Vec<usize> = (d.div_ceil(2)..d).collect();
                push(
                    "collapse_random_linear".into(),
                    EncoderSpec::collapse(dropped, EncoderSpec::random_linear(seed + 100, d)),
                );
            }
        }
        Family::Extended => {
            let mut grid: Vec<f64> = Vec::from(angles);
            if !grid.contains(&0.0) {
                grid.insert(0, 0.0);
            }
            for &a in &grid {
                for sigma in [0.0, 0.1, 0.3] {
                    let rot = EncoderSpec::rotation(a, pairs.clone(), d);
                    let spec = if sigma > 0.0 {
                        EncoderSpec::noisy(sigma, rot)
                    } else {
                        rot
                    };
                    push(format!("rotation_{a}_noise_{sigma}"), spec);
                }
            }
            for i in 0..5 {
                for sigma in [0.0, 0.1, 0.3] {
                    let lin = EncoderSpec::random_linear(seed + i, d);
                    let spec = if sigma > 0.0 {
                        EncoderSpec::noisy(sigma, lin)
                    } else {
                        lin
                    };
                    push(format!("random_linear_{i}_noise_{sigma}"), spec);
                }
            }
            for j in 0..d {
                push(
                    format!("collapse_identity_drop_{j}"),
                    EncoderSpec::collapse(vec_of(j), EncoderSpec::identity(d)),
                );
            }
            for a in grid.iter().copied().filter(|&a| a > 0.0 && a < 90.0) {
                push(
                    format!("collapse_rotation_{a}"),
                    EncoderSpec::collapse(vec_of(1), EncoderSpec::rotation(a, pairs.clone(), d)),
                );
            }
            for i in 0..3 {
                let mut keeps = alloc::vec![1, d.div_ceil(2)];
                keeps.dedup();
                for keep in keeps {
                    let dropped: Vec<usize> = (keep..d).collect();
                    if dropped.is_empty() {
                        continue;
                    }
                    push(
                        format!("collapse_random_linear_{i}_keep_{keep}"),
                        EncoderSpec::collapse(
                            dropped,
                            EncoderSpec::random_linear(seed + 100 + i, d),
                        ),
                    );
                }
            }
        }
    }
    out
}

fn vec_of(j: usize) -> Vec<usize> {
    alloc::vec![j]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worlds::build_encoder;
    use crate::FactorSpace;

    const ANGLES: [f64; 6] = [15.0, 30.0, 45.0, 60.0, 75.0, 90.0];

    #[test]
    fn family_sizes() {
        assert!(encoder_family(4, Family::Standard, &ANGLES, 0).len() >= 10);
        assert_eq!(encoder_family(4, Family::Extended, &ANGLES, 0).len(), 51);
    }

    #[test]
    fn ids_unique_and_specs_buildable() {
        for d in 2..=5 {
            let space = FactorSpace::from_cardinalities(&alloc::vec![3; d]).unwrap();
            for family in [Family::Standard, Family::Extended] {
                let members = encoder_family(d, family, &ANGLES, 7);
                let mut ids: Vec<&str> = members.iter().map(|(id, _)| id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                assert_eq!(ids.len(), members.len());
                for (id, spec) in &members {
                    assert!(build_encoder(spec, &space).is_ok(), "{id}");
                }
            }
        }
    }

    #[test]
    fn seed_moves_only_random_mixings() {
        let a = encoder_family(4, Family::Extended, &ANGLES, 0);
        let b = encoder_family(4, Family::Extended, &ANGLES, 1);
        for ((ia, sa), (ib, sb)) in a.iter().zip(&b) {
            assert_eq!(ia, ib);
            assert_eq!(sa == sb, !ia.contains("random_linear"), "{ia}");
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("extended".parse::<Family>().unwrap(), Family::Extended);
        assert!("large".parse::<Family>().is_err());
    }
}

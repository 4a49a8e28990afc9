use alloc::collections::BTreeMap;

use crate::{Error, Result};

/// Maps each code dim to the factor it most often voted for.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteClassifier {
    pub map: BTreeMap<usize, usize>,
    /// Fraction of the training votes consistent with `map`.
    pub accuracy: f64,
}

impl VoteClassifier {
    /// Fraction of `votes` whose `(dim, factor)` agrees with the map; dims
    /// never seen in training count as misses.
    pub fn accuracy_on(&self, votes: &[(usize, usize)]) -> Result<f64> {
        if votes.is_empty() {
            return Err(Error::domain("no votes to score"));
        }
        let hits = votes
            .iter()
            .filter(|(d, f)| self.map.get(d) == Some(f))
            .count();
        Ok(hits as f64 / votes.len() as f64)
    }
}

/// Majority vote over `(dim, factor)` pairs; ties go to the lower factor.
pub fn majority_vote(votes: &[(usize, usize)]) -> Result<VoteClassifier> {
    if votes.is_empty() {
        return Err(Error::domain("majority vote needs at least one vote"));
    }
    let mut tallies: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for &(d, f) in votes {
        *tallies.entry(d).or_default().entry(f).or_default() += 1;
    }
    let mut map = BTreeMap::new();
    let mut consistent = 0;
    for (d, per_factor) in tallies {
        // BTreeMap iterates factors in ascending order; keep the first maximum.
        let (factor, count) =
            per_factor.into_iter().fold(
                (0, 0),
                |best, (f, c)| if c > best.1 { (f, c) } else { best },
            );
        map.insert(d, factor);
        consistent += count;
    }
    Ok(VoteClassifier {
        map,
        accuracy: consistent as f64 / votes.len() as f64,
    })
}

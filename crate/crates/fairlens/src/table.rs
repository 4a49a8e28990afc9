//! External code dumps: CSV with `factor_<name>` columns followed by
//! `code_0 .. code_{d-1}`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use fairlens_core::space::{FactorAssignment, FactorSpace, RepresentationSource, SeededRng};
use rand::Rng;

use crate::error::{CliError, Result};

/// Tables longer than this are rejected unless a larger cap is given.
pub const DEFAULT_ROW_CAP: usize = 1_000_000;

/// An in-memory code dump, usable as a representation source by resampling
/// its rows.
#[derive(Debug, Clone)]
pub struct CodeTable {
    num_factors: usize,
    code_dim: usize,
    factors: Vec<usize>,
    codes: Vec<f64>,
    /// `rows_with[k][v]`: rows where factor `k` takes value `v`.
    rows_with: Vec<Vec<Vec<u32>>>,
}

impl CodeTable {
    pub fn read(path: &Path, space: &FactorSpace, row_cap: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(file, path, space, row_cap)
    }

    /// Parses CSV from `reader`; `path` only labels diagnostics.
    pub fn parse<R: Read>(
        reader: R,
        path: &Path,
        space: &FactorSpace,
        row_cap: usize,
    ) -> Result<Self> {
        let err = |line: u64, message: String| CliError::Table {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = csv.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let k = space.num_factors();
        for (i, f) in space.factors().iter().enumerate() {
            let expected = format!("factor_{}", f.name);
            if header.get(i) != Some(expected.as_str()) {
                return Err(err(
                    1,
                    format!(
                        "column {} must be '{expected}', found {:?}",
                        i + 1,
                        header.get(i)
                    ),
                ));
            }
        }
        let code_dim = header.len().saturating_sub(k);
        if code_dim == 0 {
            return Err(err(1, "no code_<j> columns".into()));
        }
        for j in 0..code_dim {
            let expected = format!("code_{j}");
            if header.get(k + j) != Some(expected.as_str()) {
                return Err(err(
                    1,
                    format!(
                        "column {} must be '{expected}', found {:?}",
                        k + j + 1,
                        header.get(k + j)
                    ),
                ));
            }
        }
        let mut factors = Vec::new();
        let mut codes = Vec::new();
        let mut rows = 0usize;
        for record in csv.records() {
            let record =
                record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(err(
                    line,
                    format!("expected {} cells, found {}", header.len(), record.len()),
                ));
            }
            rows += 1;
            if rows > row_cap {
                return Err(err(line, format!("more than {row_cap} rows")));
            }
            for (i, cell) in record.iter().enumerate() {
                let column = &header[i];
                if cell.trim().is_empty() {
                    return Err(err(line, format!("missing value in column '{column}'")));
                }
                if i < k {
                    let v: usize = cell.trim().parse().map_err(|_| {
                        err(
                            line,
                            format!("'{cell}' in column '{column}' is not a label"),
                        )
                    })?;
                    if v >= space.cardinality(i) {
                        return Err(err(
                            line,
                            format!(
                                "label {v} in column '{column}' exceeds cardinality {}",
                                space.cardinality(i)
                            ),
                        ));
                    }
                    factors.push(v);
                } else {
                    let v: f64 = cell
                        .trim()
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| {
                            err(
                                line,
                                format!("'{cell}' in column '{column}' is not a finite number"),
                            )
                        })?;
                    codes.push(v);
                }
            }
        }
        if rows == 0 {
            return Err(err(1, "table has no data rows".into()));
        }
        let mut rows_with: Vec<Vec<Vec<u32>>> = space
            .factors()
            .iter()
            .map(|f| vec![Vec::new(); f.cardinality])
            .collect();
        for (r, values) in factors.chunks_exact(k).enumerate() {
            for (f, &v) in values.iter().enumerate() {
                rows_with[f][v].push(r as u32);
            }
        }
        for (f, by_value) in rows_with.iter().enumerate() {
            if by_value.iter().filter(|rows| !rows.is_empty()).count() < 2 {
                return Err(err(
                    1,
                    format!(
                        "column 'factor_{}' needs at least 2 distinct values",
                        space.factors()[f].name
                    ),
                ));
            }
        }
        Ok(CodeTable {
            num_factors: k,
            code_dim,
            factors,
            codes,
            rows_with,
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len() / self.num_factors
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Label frequencies per factor.
    pub fn empirical_priors(&self) -> Vec<Vec<f64>> {
        let n = self.len() as f64;
        self.rows_with
            .iter()
            .map(|by_value| by_value.iter().map(|r| r.len() as f64 / n).collect())
            .collect()
    }

    fn row_matches(&self, row: usize, fixed: &FactorAssignment) -> bool {
        let values = &self.factors[row * self.num_factors..(row + 1) * self.num_factors];
        values
            .iter()
            .enumerate()
            .all(|(f, &v)| !fixed.is_fixed(f) || fixed.values[f] == v)
    }
}

impl RepresentationSource for CodeTable {
    fn code_dim(&self) -> usize {
        self.code_dim
    }

    /// Draws a row uniformly among those agreeing with every fixed slot;
    /// free slots therefore follow the table's empirical distribution.
    fn sample_into(
        &self,
        _space: &FactorSpace,
        fixed: &FactorAssignment,
        rng: &mut SeededRng,
        values: &mut [usize],
        code: &mut [f64],
    ) -> fairlens_core::Result<()> {
        let fixed_slots: Vec<usize> = (0..self.num_factors)
            .filter(|&f| fixed.is_fixed(f))
            .collect();
        let row = match fixed_slots.as_slice() {
            [] => rng.random_range(0..self.len()),
            slots => {
                let pool = slots
                    .iter()
                    .map(|&f| &self.rows_with[f][fixed.values[f]])
                    .min_by_key(|rows| rows.len())
                    .expect("at least one fixed slot");
                let matching: Vec<u32> = if slots.len() == 1 {
                    pool.clone()
                } else {
                    pool.iter()
                        .copied()
                        .filter(|&r| self.row_matches(r as usize, fixed))
                        .collect()
                };
                if matching.is_empty() {
                    return Err(fairlens_core::Error::Domain(format!(
                        "no table row matches the fixed factors {:?}",
                        slots
                            .iter()
                            .map(|&f| (f, fixed.values[f]))
                            .collect::<Vec<_>>()
                    )));
                }
                matching[rng.random_range(0..matching.len())] as usize
            }
        };
        values.copy_from_slice(&self.factors[row * self.num_factors..(row + 1) * self.num_factors]);
        code.copy_from_slice(&self.codes[row * self.code_dim..(row + 1) * self.code_dim]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairlens_core::{rng_for, sample_batch};

    fn space() -> FactorSpace {
        FactorSpace::from_cardinalities(&[2, 3]).unwrap()
    }

    fn parse(text: &str) -> Result<CodeTable> {
        CodeTable::parse(
            text.as_bytes(),
            Path::new("t.csv"),
            &space(),
            DEFAULT_ROW_CAP,
        )
    }

    const GOOD: &str = "factor_f0,factor_f1,code_0,code_1\n0,0,0.5,1e-3\n1,2,-1.25,2\n0,1,3,4\n";

    #[test]
    fn parses_a_valid_table() {
        let t = parse(GOOD).unwrap();
        assert_eq!((t.len(), t.code_dim()), (3, 2));
        assert_eq!(t.codes, vec![0.5, 1e-3, -1.25, 2.0, 3.0, 4.0]);
        let p = t.empirical_priors();
        assert!((p[0][0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let cases = [
            ("factor_a,factor_f1,code_0\n0,0,1\n", ":1:"),
            ("factor_f0,factor_f1\n0,0\n", "no code"),
            (
                "factor_f0,factor_f1,code_0\n0,0,1\n1,1,\n",
                ":3: missing value",
            ),
            (
                "factor_f0,factor_f1,code_0\n0,0,1\n1,1\n",
                ":3: expected 3 cells",
            ),
            ("factor_f0,factor_f1,code_0\n0,0,1\n1,3,0\n", ":3: label 3"),
            ("factor_f0,factor_f1,code_0\n0,0,1\n1,1,1,5\n", ":3:"),
            ("factor_f0,factor_f1,code_0\n0,0,1,0\n", ":2:"),
            ("factor_f0,factor_f1,code_0\n0,0,nan\n", ":2: 'nan'"),
            ("factor_f0,factor_f1,code_0\n0,0,\"1,5\"\n", ":2: '1,5'"),
            (
                "factor_f0,factor_f1,code_0\n0,0,1\n0,1,1\n",
                "at least 2 distinct",
            ),
            ("factor_f0,factor_f1,code_0\n", "no data rows"),
        ];
        for (text, needle) in cases {
            let msg = parse(text).unwrap_err().to_string();
            assert!(msg.contains(needle), "{text:?}: {msg}");
        }
    }

    #[test]
    fn row_cap_is_enforced() {
        let err = CodeTable::parse(GOOD.as_bytes(), Path::new("t.csv"), &space(), 2).unwrap_err();
        assert!(err.to_string().contains("more than 2 rows"));
    }

    #[test]
    fn sampling_respects_interventions() {
        let t = parse(GOOD).unwrap();
        let s = space();
        let mut rng = rng_for(0, 0);
        let batch = sample_batch(
            &t,
            &s,
            200,
            &FactorAssignment::intervention(2, 0, 0),
            &mut rng,
        )
        .unwrap();
        for i in 0..batch.len() {
            assert_eq!(batch.factor_row(i)[0], 0);
            assert!(batch.code_row(i) == [0.5, 1e-3] || batch.code_row(i) == [3.0, 4.0]);
        }
        let mut both = FactorAssignment::free(2);
        both.fix(0, 1);
        both.fix(1, 2);
        let batch = sample_batch(&t, &s, 5, &both, &mut rng).unwrap();
        assert!((0..5).all(|i| batch.code_row(i) == [-1.25, 2.0]));
        let mut none = FactorAssignment::free(2);
        none.fix(0, 1);
        none.fix(1, 0);
        assert!(sample_batch(&t, &s, 1, &none, &mut rng).is_err());
    }
}

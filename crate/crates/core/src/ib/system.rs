use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const COLUMN_TOL: f64 = 1e-9;

/// A probabilistic naming system: encoder `q(w|c)` stored as a `K × N`
/// matrix whose columns are distributions over words.
#[derive(Clone, Debug, PartialEq)]
pub struct NamingSystem {
    encoder: Matrix,
}

impl NamingSystem {
    pub fn new(encoder: Matrix) -> Result<Self> {
        if encoder.rows() == 0 || encoder.cols() == 0 {
            return Err(Error::validation("naming system must have at least one word and chip"));
        }
        for c in 0..encoder.cols() {
            let mut total = 0.0;
            for w in 0..encoder.rows() {
                let q = encoder[(w, c)];
                if !(q >= 0.0 && q.is_finite()) {
                    return Err(Error::validation(format!(
                        "encoder entry q({w}|{c}) = {q} is not a probability"
                    )));
                }
                total += q;
            }
            if (total - 1.0).abs() > COLUMN_TOL {
                return Err(Error::validation(format!(
                    "encoder column {c} sums to {total}"
                )));
            }
        }
        Ok(NamingSystem { encoder })
    }

    /// Normalizes each column of a non-negative weight matrix.
    pub fn from_weights(mut weights: Matrix) -> Result<Self> {
        for c in 0..weights.cols() {
            let total: f64 = (0..weights.rows()).map(|w| weights[(w, c)]).sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::validation(format!("column {c} has no mass")));
            }
            for w in 0..weights.rows() {
                weights[(w, c)] /= total;
            }
        }
        NamingSystem::new(weights)
    }

    /// Deterministic system assigning `labels[c]` to chip `c`.
    pub fn from_labels(labels: &[usize], num_words: usize) -> Result<Self> {
        let mut m = Matrix::zeros(num_words, labels.len());
        for (c, &w) in labels.iter().enumerate() {
            if w >= num_words {
                return Err(Error::validation(format!("label {w} exceeds word count {num_words}")));
            }
            m[(w, c)] = 1.0;
        }
        NamingSystem::new(m)
    }

    /// Uniform `1/K` over words for every chip.
    pub fn uniform(num_words: usize, num_chips: usize) -> Self {
        NamingSystem {
            encoder: Matrix::from_vec(
                num_words,
                num_chips,
                vec![1.0 / num_words as f64; num_words * num_chips],
            ),
        }
    }

    #[inline]
    pub fn num_words(&self) -> usize {
        self.encoder.rows()
    }

    #[inline]
    pub fn num_chips(&self) -> usize {
        self.encoder.cols()
    }

    #[inline]
    pub fn q(&self, word: usize, chip: usize) -> f64 {
        self.encoder[(word, chip)]
    }

    pub fn encoder(&self) -> &Matrix {
        &self.encoder
    }

    /// Distribution over words for `chip`.
    pub fn column(&self, chip: usize) -> Vec<f64> {
        self.encoder.column(chip)
    }

    /// Word marginal `q(w) = Σ_c p(c) q(w|c)`.
    pub fn word_marginal(&self, prior: &[f64]) -> Vec<f64> {
        (0..self.num_words())
            .map(|w| {
                self.encoder
                    .row(w)
                    .iter()
                    .zip(prior)
                    .map(|(q, p)| q * p)
                    .sum()
            })
            .collect()
    }

    /// Joint `p(w, c) = p(c) q(w|c)` as a `K × N` matrix.
    pub fn joint(&self, prior: &[f64]) -> Matrix {
        Matrix::from_fn(self.num_words(), self.num_chips(), |w, c| {
            prior[c] * self.encoder[(w, c)]
        })
    }

    /// Applies a relabeling: word `w` becomes `perm[w]`.
    pub fn permute_words(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_words() {
            return Err(Error::dimension("permutation length differs from word count"));
        }
        let mut m = Matrix::zeros(self.num_words(), self.num_chips());
        for (w, &to) in perm.iter().enumerate() {
            m.row_mut(to).copy_from_slice(self.encoder.row(w));
        }
        NamingSystem::new(m)
    }

    /// Serializes as `K=<k> grid=<id>` followed by K tab-separated rows.
    pub fn to_tsv(&self, grid_id: &str) -> String {
        let mut out = format!("K={} grid={}\n", self.num_words(), grid_id);
        for w in 0..self.num_words() {
            let row = self.encoder.row(w);
            for (c, q) in row.iter().enumerate() {
                if c > 0 {
                    out.push('\t');
                }
                // Shortest round-trip representation.
                write!(out, "{q:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`NamingSystem::to_tsv`]; returns the
    /// grid id from the header alongside the system.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<(Self, String)> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::format("empty naming system file")),
            }
        };
        let mut k = None;
        let mut grid_id = String::new();
        for token in header.split_whitespace() {
            if let Some(v) = token.strip_prefix("K=") {
                k = Some(v.parse::<usize>().map_err(|_| Error::format("bad K in header"))?);
            } else if let Some(v) = token.strip_prefix("grid=") {
                grid_id = v.to_string();
            }
        }
        let k = k.ok_or_else(|| Error::format("header must contain K=<int>"))?;
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(format!("bad number in row {rows}")))?;
            match cols {
                None => cols = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::format(format!("row {rows} has {} columns, expected {n}", row.len())))
                }
                _ => {}
            }
            data.extend(row);
            rows += 1;
        }
        if rows != k {
            return Err(Error::format(format!("header says K={k} but found {rows} rows")));
        }
        let sys = NamingSystem::new(Matrix::from_vec(rows, cols.unwrap_or(0), data))?;
        Ok((sys, grid_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized_columns() {
        let m = Matrix::from_vec(2, 2, vec![0.5, 0.5, 0.4, 0.5]);
        assert!(matches!(NamingSystem::new(m), Err(Error::Validation(_))));
    }

    #[test]
    fn tsv_round_trip_is_bit_identical() {
        let m = Matrix::from_vec(2, 3, vec![0.1, 1.0 / 3.0, 0.7, 0.9, 2.0 / 3.0, 0.3]);
        let sys = NamingSystem::from_weights(m).unwrap();
        let text = sys.to_tsv("abc");
        let (back, id) = NamingSystem::from_tsv(text.as_bytes()).unwrap();
        assert_eq!(id, "abc");
        assert_eq!(back, sys);
    }

    #[test]
    fn header_row_count_is_checked() {
        let text = "K=3 grid=x\n1\t1\n";
        assert!(NamingSystem::from_tsv(text.as_bytes()).is_err());
    }
}

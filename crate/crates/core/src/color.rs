//! Stimulus space: the chip grid, CIELAB geometry, the prior over chips and
//! the Gaussian meaning model used by the IB analysis.

use std::collections::BTreeMap;
use std::io::BufRead;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of chips in the standard naming grid.
pub const GRID_SIZE: usize = 330;

/// Rows of the naming grid, lightest first.
pub const GRID_ROWS: [char; 10] = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J'];

/// Columns of the naming grid: 0 is achromatic, 1..=40 are hues.
pub const GRID_COLUMNS: usize = 41;

/// Default width of the meaning Gaussians, in squared CIELAB units.
pub const DEFAULT_SIGMA_SQ: f64 = 64.0;

/// Chip coordinates bundled with the crate (see `data/chips.tsv`).
pub const BUNDLED_CHIP_TABLE: &str = include_str!("../../../data/chips.tsv");

#[derive(Clone, Debug, PartialEq)]
pub struct Chip {
    pub index: usize,
    pub row: char,
    pub column: u8,
    pub lab: [f64; 3],
}

/// Squared Euclidean distance between two chips in CIELAB.
#[inline]
pub fn perceptual_distance_sq(a: &Chip, b: &Chip) -> f64 {
    lab_distance_sq(&a.lab, &b.lab)
}

#[inline]
pub fn lab_distance_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dl = a[0] - b[0];
    let da = a[1] - b[1];
    let db = a[2] - b[2];
    dl * dl + da * da + db * db
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    /// Required chip count; `None` accepts any non-empty table.
    pub expected_chips: Option<usize>,
    /// Rescale a prior that does not sum to one instead of rejecting it.
    pub renormalize_prior: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            expected_chips: Some(GRID_SIZE),
            renormalize_prior: false,
        }
    }
}

/// The ordered chip palette and a prior distribution over it.
#[derive(Clone, Debug, PartialEq)]
pub struct ChipGrid {
    chips: Vec<Chip>,
    prior: Vec<f64>,
}

impl ChipGrid {
    /// Builds a grid from chips ordered by index and an optional prior
    /// (uniform when absent).
    pub fn new(chips: Vec<Chip>, prior: Option<Vec<f64>>) -> Result<Self> {
        if chips.is_empty() {
            return Err(Error::format("chip table is empty"));
        }
        for (i, chip) in chips.iter().enumerate() {
            if chip.index != i {
                return Err(Error::format(format!(
                    "chip indices must be 0..{} in order, found {} at position {i}",
                    chips.len(),
                    chip.index
                )));
            }
            if chip.lab.iter().any(|v| !v.is_finite()) || !(0.0..=100.0).contains(&chip.lab[0]) {
                return Err(Error::validation(format!(
                    "chip {i} has invalid CIELAB coordinates {:?}",
                    chip.lab
                )));
            }
        }
        let n = chips.len();
        let prior = match prior {
            Some(p) => {
                validate_prior(&p, n, 1e-9)?;
                p
            }
            None => vec![1.0 / n as f64; n],
        };
        Ok(ChipGrid { chips, prior })
    }

    /// Parses a chip table (`index row col L a b`, tab separated, optional
    /// header) and an optional prior (`index p`).
    pub fn load<R: BufRead, P: BufRead>(
        coord_table: R,
        prior_source: Option<P>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let mut by_index: BTreeMap<usize, Chip> = BTreeMap::new();
        for (lineno, line) in coord_table.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if lineno == 0 && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
                continue; // header
            }
            if fields.len() != 6 {
                return Err(Error::format(format!(
                    "chip table line {}: expected 6 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse_f = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::format(format!("chip table line {}: bad number {s:?}", lineno + 1))
                })
            };
            let index: usize = fields[0].parse().map_err(|_| {
                Error::format(format!("chip table line {}: bad index {:?}", lineno + 1, fields[0]))
            })?;
            let mut row_chars = fields[1].chars();
            let row = match (row_chars.next(), row_chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => c.to_ascii_uppercase(),
                _ => {
                    return Err(Error::format(format!(
                        "chip table line {}: bad row {:?}",
                        lineno + 1,
                        fields[1]
                    )))
                }
            };
            let column: u8 = fields[2].parse().map_err(|_| {
                Error::format(format!("chip table line {}: bad column {:?}", lineno + 1, fields[2]))
            })?;
            let lab = [parse_f(fields[3])?, parse_f(fields[4])?, parse_f(fields[5])?];
            let chip = Chip {
                index,
                row,
                column,
                lab,
            };
            if by_index.insert(index, chip).is_some() {
                return Err(Error::format(format!("duplicate chip index {index}")));
            }
        }
        let n = by_index.len();
        if let Some(expected) = opts.expected_chips {
            if n != expected {
                return Err(Error::format(format!("expected {expected} chips, found {n}")));
            }
        }
        if let Some((&last, _)) = by_index.iter().next_back() {
            if last + 1 != n {
                return Err(Error::format(format!(
                    "chip indices are not contiguous: {n} chips but max index {last}"
                )));
            }
        }
        let chips: Vec<Chip> = by_index.into_values().collect();

        let prior = match prior_source {
            None => None,
            Some(src) => Some(parse_prior(src, n, opts.renormalize_prior)?),
        };
        ChipGrid::new(chips, prior)
    }

    /// The bundled 330-chip grid with a uniform prior.
    pub fn bundled() -> Self {
        ChipGrid::load(
            BUNDLED_CHIP_TABLE.as_bytes(),
            None::<&[u8]>,
            LoadOptions::default(),
        )
        .expect("bundled chip table is valid")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn chips(&self) -> &[Chip] {
        &self.chips
    }

    #[inline]
    pub fn chip(&self, index: usize) -> &Chip {
        &self.chips[index]
    }

    #[inline]
    pub fn lab(&self, index: usize) -> &[f64; 3] {
        &self.chips[index].lab
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Index of the chip at `(row, column)`, if present.
    pub fn position(&self, row: char, column: u8) -> Option<usize> {
        self.chips
            .iter()
            .position(|c| c.row == row && c.column == column)
    }

    /// Pairwise squared distances, `n × n`.
    pub fn distance_matrix(&self) -> Matrix {
        let n = self.len();
        Matrix::from_fn(n, n, |i, j| {
            perceptual_distance_sq(&self.chips[i], &self.chips[j])
        })
    }

    /// Stable content hash of coordinates and prior (hex SHA-256 prefix).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for chip in &self.chips {
            hasher.update((chip.index as u64).to_le_bytes());
            hasher.update([chip.row as u8, chip.column]);
            for v in chip.lab {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        for p in &self.prior {
            hasher.update(p.to_bits().to_le_bytes());
        }
        hex_prefix(&hasher.finalize(), 16)
    }
}

pub(crate) fn hex_prefix(bytes: &[u8], len: usize) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>()
        .chars()
        .take(len)
        .collect()
}

fn validate_prior(prior: &[f64], n: usize, tol: f64) -> Result<()> {
    if prior.len() != n {
        return Err(Error::validation(format!(
            "prior has {} entries, grid has {n} chips",
            prior.len()
        )));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::validation("prior has negative or non-finite entries"));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::validation(format!("prior sums to {total}, not 1")));
    }
    Ok(())
}

fn parse_prior<P: BufRead>(src: P, n: usize, renormalize: bool) -> Result<Vec<f64>> {
    let mut prior = vec![f64::NAN; n];
    for (lineno, line) in src.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if lineno == 0 && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::format(format!(
                "prior line {}: expected 2 fields",
                lineno + 1
            )));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| Error::format(format!("prior line {}: bad index", lineno + 1)))?;
        let p: f64 = fields[1]
            .parse()
            .map_err(|_| Error::format(format!("prior line {}: bad probability", lineno + 1)))?;
        if index >= n {
            return Err(Error::format(format!("prior index {index} out of range")));
        }
        if !prior[index].is_nan() {
            return Err(Error::format(format!("duplicate prior index {index}")));
        }
        prior[index] = p;
    }
    if let Some(missing) = prior.iter().position(|p| p.is_nan()) {
        return Err(Error::format(format!("prior is missing chip {missing}")));
    }
    if prior.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::validation("prior has negative or non-finite entries"));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        if !renormalize {
            return Err(Error::validation(format!(
                "prior sums to {total}; pass the renormalize flag to rescale"
            )));
        }
    }
    if total <= 0.0 {
        return Err(Error::validation("prior has zero mass"));
    }
    // Rescale so the stored prior meets the 1e-9 invariant exactly.
    for p in &mut prior {
        *p /= total;
    }
    Ok(prior)
}

/// Gaussian meaning distributions `m_c(u) ∝ exp(-‖x_u - x_c‖² / 2σ²)`.
#[derive(Clone, Debug)]
pub struct MeaningModel {
    sigma_sq: f64,
    likelihood: Matrix,
}

impl MeaningModel {
    pub fn new(grid: &ChipGrid, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::validation(format!("sigma_sq must be positive, got {sigma_sq}")));
        }
        let n = grid.len();
        let mut likelihood = Matrix::zeros(n, n);
        for c in 0..n {
            let row = likelihood.row_mut(c);
            // Exponents are ≤ 0 with the self term exactly 0, so no shift is needed.
            for (u, m) in row.iter_mut().enumerate() {
                *m = (-lab_distance_sq(grid.lab(c), grid.lab(u)) / (2.0 * sigma_sq)).exp();
            }
            let z: f64 = row.iter().sum();
            for m in row.iter_mut() {
                *m /= z;
            }
        }
        Ok(MeaningModel {
            sigma_sq,
            likelihood,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn len(&self) -> usize {
        self.likelihood.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.likelihood.rows() == 0
    }

    /// Row-stochastic `m_c(u)`, rows indexed by chip.
    pub fn likelihood(&self) -> &Matrix {
        &self.likelihood
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[f64] {
        self.likelihood.row(c)
    }
}

//! gNID between naming systems and the per-chip mode map.

use crate::color::ChipGrid;
use crate::error::{Error, Result};
use crate::ib::info::mi_nats;
use crate::ib::NamingSystem;
use crate::matrix::Matrix;

const DEGENERATE_INFO: f64 = 1e-12;

/// `p(w_a, w_b) = Σ_c p(c) q_a(w_a|c) q_b(w_b|c)`.
fn cross_joint(a: &NamingSystem, b: &NamingSystem, prior: &[f64]) -> Matrix {
    a.joint(prior).matmul_transposed(b.encoder())
}

fn is_constant(sys: &NamingSystem) -> bool {
    let first = sys.column(0);
    (1..sys.num_chips()).all(|c| {
        first
            .iter()
            .enumerate()
            .all(|(w, &q)| (sys.q(w, c) - q).abs() <= 1e-12)
    })
}

/// Generalized normalized information distance.
pub fn gnid(a: &NamingSystem, b: &NamingSystem, grid: &ChipGrid) -> Result<f64> {
    let n = grid.len();
    if a.num_chips() != n || b.num_chips() != n {
        return Err(Error::dimension("both systems must cover the grid"));
    }
    let prior = grid.prior();
    let i_ab = mi_nats(&cross_joint(a, b, prior));
    let i_aa = mi_nats(&cross_joint(a, a, prior));
    let i_bb = mi_nats(&cross_joint(b, b, prior));
    let norm = i_aa.max(i_bb);
    if norm <= DEGENERATE_INFO {
        if is_constant(a) && is_constant(b) {
            return Ok(0.0);
        }
        return Err(Error::validation(
            "gNID undefined: both systems carry no information but are not constant",
        ));
    }
    Ok(1.0 - i_ab / norm)
}

/// Lowest gNID from `sys` to any reference, with ties going to the lowest index.
pub fn min_gnid_to_set(
    sys: &NamingSystem,
    refs: &[NamingSystem],
    grid: &ChipGrid,
) -> Result<(f64, usize)> {
    if refs.is_empty() {
        return Err(Error::validation("reference set is empty"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, r) in refs.iter().enumerate() {
        let d = gnid(sys, r, grid)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}

/// Rendering band of a chip's modal probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    /// `max_w q(w|c) ∈ [0.75, 1.0]`
    Solid,
    /// `[0.3, 0.75)`
    Faded,
    /// below 0.3
    Blank,
}

impl Band {
    pub fn of(prob: f64) -> Band {
        if prob >= 0.75 {
            Band::Solid
        } else if prob >= 0.3 {
            Band::Faded
        } else {
            Band::Blank
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeMap {
    pub modes: Vec<usize>,
    pub max_prob: Vec<f64>,
    pub bands: Vec<Band>,
}

/// Argmax word per chip (lowest index wins ties) with its level-set band.
pub fn mode_map(sys: &NamingSystem) -> ModeMap {
    let n = sys.num_chips();
    let mut modes = Vec::with_capacity(n);
    let mut max_prob = Vec::with_capacity(n);
    for c in 0..n {
        let mut best = 0;
        for w in 1..sys.num_words() {
            if sys.q(w, c) > sys.q(best, c) {
                best = w;
            }
        }
        modes.push(best);
        max_prob.push(sys.q(best, c));
    }
    let bands = max_prob.iter().map(|&p| Band::of(p)).collect();
    ModeMap {
        modes,
        max_prob,
        bands,
    }
}

//! The IB theoretical limit, traced by reverse deterministic annealing.
//!
//! For each β (descending) the self-consistent equations
//!
//! ```text
//! q(w|c) ∝ q(w) · exp(−β · KL[m_c ‖ m̂_w]),   m̂_w(u) = Σ_c p(c|w) m_c(u)
//! ```
//!
//! are iterated until `F_β = I(C;W) − β·I(W;U)` stops changing. Each β is
//! warm-started from the previous solution, starting from the identity
//! encoder at the largest β.

use std::io::{BufRead, Write};

use crate::color::{ChipGrid, MeaningModel};
use crate::error::{Error, Result};
use crate::ib::NamingSystem;
use crate::matrix::Matrix;

const LN2: f64 = std::f64::consts::LN_2;

/// Words whose marginal falls below this are dropped between β steps.
const DEAD_WORD_MASS: f64 = 1e-12;
/// Words whose decoders differ by less than this (max abs) are merged.
const MERGE_TOL: f64 = 1e-7;
/// Log-weights this far below the best word are set to zero (e^-200 ≈ 1e-87).
const LOGIT_FLOOR: f64 = -200.0;

#[derive(Clone, Debug)]
pub struct FrontierConfig {
    /// Strictly descending, all ≥ 1.
    pub betas: Vec<f64>,
    /// Initial vocabulary; `None` uses one word per chip.
    pub max_words: Option<usize>,
    /// Convergence threshold on `|ΔF_β|` in bits between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Store the optimal encoder for every β (memory heavy on full grids).
    pub keep_encoders: bool,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            betas: default_beta_schedule(),
            max_words: None,
            tol: 1e-6,
            max_sweeps: 5000,
            keep_encoders: false,
        }
    }
}

/// 1500 values from `1 + 2^13` down to 1, geometric in `β − 1` (which
/// runs from `2^13` to `1e-3` before the final β = 1). The color frontier
/// spends almost all of its complexity range at β < 1.3.
pub fn default_beta_schedule() -> Vec<f64> {
    offset_geometric_schedule(2f64.powi(13), 1e-3, 1500)
}

/// `n` values `1 + g_i` with `g` geometric from `start` to `end`, followed
/// by β = 1 as the last entry.
pub fn offset_geometric_schedule(start: f64, end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let mut out: Vec<f64> = geometric_schedule(start, end, n - 1)
        .into_iter()
        .map(|g| 1.0 + g)
        .collect();
    out.push(1.0);
    out
}

/// `n` geometrically spaced values from `start` down to `end` inclusive.
pub fn geometric_schedule(start: f64, end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![start];
    }
    let ratio = (end / start).ln() / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| start * (ratio * i as f64).exp()).collect();
    out[n - 1] = end;
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierPoint {
    pub beta: f64,
    pub complexity: f64,
    pub accuracy: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub num_words: usize,
}

impl FrontierPoint {
    /// `F_β` in bits for this point.
    pub fn objective(&self, beta: f64) -> f64 {
        self.complexity - beta * self.accuracy
    }
}

#[derive(Clone, Debug, Default)]
pub struct IBCurve {
    points: Vec<FrontierPoint>,
    encoders: Vec<Option<NamingSystem>>,
    /// Converged (complexity, accuracy) pairs sorted by complexity, with the
    /// (0, 0) anchor and accuracy made nondecreasing.
    envelope: Vec<(f64, f64)>,
}

impl IBCurve {
    pub fn from_points(points: Vec<FrontierPoint>, encoders: Vec<Option<NamingSystem>>) -> Self {
        assert_eq!(points.len(), encoders.len());
        let envelope = build_envelope(&points);
        IBCurve {
            points,
            encoders,
            envelope,
        }
    }

    /// All computed points in schedule order, including flagged ones.
    pub fn all_points(&self) -> &[FrontierPoint] {
        &self.points
    }

    /// Converged points in schedule order.
    pub fn points(&self) -> impl Iterator<Item = &FrontierPoint> + '_ {
        self.points.iter().filter(|p| p.converged)
    }

    pub fn betas(&self) -> Vec<f64> {
        self.points().map(|p| p.beta).collect()
    }

    pub fn len(&self) -> usize {
        self.points().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_flagged(&self) -> usize {
        self.points.iter().filter(|p| !p.converged).count()
    }

    /// Optimal encoder at schedule position `i`, if kept.
    pub fn encoder(&self, i: usize) -> Option<&NamingSystem> {
        self.encoders.get(i).and_then(Option::as_ref)
    }

    /// Frontier vertices sorted by complexity.
    pub fn envelope(&self) -> &[(f64, f64)] {
        &self.envelope
    }

    /// Piecewise-linear frontier accuracy at `complexity`; flat beyond the
    /// most complex computed point.
    pub fn accuracy_at(&self, complexity: f64) -> f64 {
        let env = &self.envelope;
        if complexity <= 0.0 {
            return 0.0;
        }
        let idx = env.partition_point(|&(cx, _)| cx < complexity);
        if idx >= env.len() {
            return env.last().map_or(0.0, |p| p.1);
        }
        let (x1, y1) = env[idx];
        if idx == 0 || x1 == complexity {
            return y1;
        }
        let (x0, y0) = env[idx - 1];
        y0 + (y1 - y0) * (complexity - x0) / (x1 - x0)
    }

    /// CSV `beta,complexity,accuracy`, converged points only.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "complexity", "accuracy"])?;
        for p in self.points() {
            w.write_record([
                format!("{:?}", p.beta),
                format!("{:?}", p.complexity),
                format!("{:?}", p.accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(format!("bad frontier row {rec:?}")))
            };
            points.push(FrontierPoint {
                beta: get(0)?,
                complexity: get(1)?,
                accuracy: get(2)?,
                converged: true,
                sweeps: 0,
                num_words: 0,
            });
        }
        let encoders = vec![None; points.len()];
        Ok(IBCurve::from_points(points, encoders))
    }
}

fn build_envelope(points: &[FrontierPoint]) -> Vec<(f64, f64)> {
    let mut env: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.converged)
        .map(|p| (p.complexity, p.accuracy))
        .collect();
    env.push((0.0, 0.0));
    env.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best = f64::NEG_INFINITY;
    for p in &mut env {
        best = best.max(p.1);
        p.1 = best;
    }
    env.dedup_by(|b, a| b.0 == a.0 && b.1 == a.1);
    env
}

/// Precomputed quantities of the meaning channel.
struct Channel<'a> {
    prior: &'a [f64],
    meanings: &'a Matrix,
    /// `Σ_u m_c(u) ln m_c(u)` per chip.
    neg_entropy: Vec<f64>,
    /// `H(U)` in nats.
    meaning_entropy: f64,
}

impl<'a> Channel<'a> {
    fn new(grid: &'a ChipGrid, mm: &'a MeaningModel) -> Self {
        let meanings = mm.likelihood();
        let n = meanings.rows();
        let neg_entropy = (0..n)
            .map(|c| {
                meanings
                    .row(c)
                    .iter()
                    .filter(|&&m| m > 0.0)
                    .map(|&m| m * m.ln())
                    .sum()
            })
            .collect();
        let mut pu = vec![0.0; n];
        for c in 0..n {
            for (acc, m) in pu.iter_mut().zip(meanings.row(c)) {
                *acc += grid.prior()[c] * m;
            }
        }
        let meaning_entropy = -pu.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        Channel {
            prior: grid.prior(),
            meanings,
            neg_entropy,
            meaning_entropy,
        }
    }
}

/// Word marginal, decoders, complexity and accuracy (nats) of an encoder.
struct Evaluation {
    word_marginal: Vec<f64>,
    decoders: Matrix,
    complexity: f64,
    accuracy: f64,
}

fn evaluate(q: &Matrix, ch: &Channel) -> Evaluation {
    let k = q.rows();
    let n = q.cols();
    let mut word_marginal = vec![0.0; k];
    let mut posterior = Matrix::zeros(k, n);
    let mut complexity = 0.0;
    for w in 0..k {
        let row = q.row(w);
        let qw: f64 = row.iter().zip(ch.prior).map(|(q, p)| q * p).sum();
        word_marginal[w] = qw;
        if qw <= 0.0 {
            continue;
        }
        let post = posterior.row_mut(w);
        for c in 0..n {
            let joint = row[c] * ch.prior[c];
            post[c] = joint / qw;
            if joint > 0.0 {
                complexity += joint * (row[c] / qw).ln();
            }
        }
    }
    let decoders = posterior.matmul(ch.meanings);
    let mut cond_entropy = 0.0;
    for w in 0..k {
        if word_marginal[w] <= 0.0 {
            continue;
        }
        let h: f64 = -decoders
            .row(w)
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| m * m.ln())
            .sum::<f64>();
        cond_entropy += word_marginal[w] * h;
    }
    Evaluation {
        word_marginal,
        decoders,
        complexity: complexity.max(0.0),
        accuracy: (ch.meaning_entropy - cond_entropy).max(0.0),
    }
}

/// One self-consistent update of the encoder given its evaluation.
fn update(eval: &Evaluation, ch: &Channel, beta: f64) -> Matrix {
    let k = eval.decoders.rows();
    let n = ch.meanings.rows();
    let mut log_dec = eval.decoders.clone();
    for v in log_dec.as_mut_slice() {
        *v = v.max(1e-300).ln();
    }
    // cross[c][w] = Σ_u m_c(u) ln m̂_w(u)
    let cross = ch.meanings.matmul_transposed(&log_dec);
    let log_qw: Vec<f64> = eval
        .word_marginal
        .iter()
        .map(|&q| if q > 0.0 { q.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut q = Matrix::zeros(k, n);
    let mut logits = vec![0.0; k];
    for c in 0..n {
        let cross_row = cross.row(c);
        let mut max = f64::NEG_INFINITY;
        for w in 0..k {
            let kl = ch.neg_entropy[c] - cross_row[w];
            logits[w] = log_qw[w] - beta * kl;
            max = max.max(logits[w]);
        }
        let mut z = 0.0;
        for l in logits.iter_mut() {
            // Flushing negligible weights keeps later products out of the subnormal range.
            let d = *l - max;
            *l = if d < LOGIT_FLOOR { 0.0 } else { d.exp() };
            z += *l;
        }
        for w in 0..k {
            q[(w, c)] = logits[w] / z;
        }
    }
    q
}

/// Drops dead words and merges words with indistinguishable decoders.
fn compact(q: Matrix, eval: &Evaluation) -> Matrix {
    let k = q.rows();
    let n = q.cols();
    let alive: Vec<usize> = (0..k).filter(|&w| eval.word_marginal[w] > DEAD_WORD_MASS).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'outer: for &w in &alive {
        for g in groups.iter_mut() {
            let rep = g[0];
            let same = eval
                .decoders
                .row(rep)
                .iter()
                .zip(eval.decoders.row(w))
                .all(|(a, b)| (a - b).abs() < MERGE_TOL);
            if same {
                g.push(w);
                continue 'outer;
            }
        }
        groups.push(vec![w]);
    }
    if groups.len() == k {
        return q;
    }
    let mut out = Matrix::zeros(groups.len(), n);
    for (g, members) in groups.iter().enumerate() {
        let row = out.row_mut(g);
        for &w in members {
            for (acc, v) in row.iter_mut().zip(q.row(w)) {
                *acc += v;
            }
        }
    }
    for c in 0..n {
        let total: f64 = (0..out.rows()).map(|w| out[(w, c)]).sum();
        for w in 0..out.rows() {
            out[(w, c)] /= total;
        }
    }
    out
}

fn initial_encoder(grid: &ChipGrid, max_words: usize) -> Matrix {
    let n = grid.len();
    if max_words >= n {
        return Matrix::identity(n);
    }
    // Farthest-point seeds, then nearest-seed assignment.
    let mut seeds = vec![0usize];
    let mut min_dist: Vec<f64> = (0..n)
        .map(|c| crate::color::lab_distance_sq(grid.lab(c), grid.lab(0)))
        .collect();
    while seeds.len() < max_words {
        let next = (0..n)
            .max_by(|&a, &b| min_dist[a].total_cmp(&min_dist[b]).then(b.cmp(&a)))
            .unwrap();
        seeds.push(next);
        for c in 0..n {
            min_dist[c] = min_dist[c].min(crate::color::lab_distance_sq(grid.lab(c), grid.lab(next)));
        }
    }
    let mut q = Matrix::zeros(max_words, n);
    for c in 0..n {
        let best = (0..max_words)
            .min_by(|&a, &b| {
                let da = crate::color::lab_distance_sq(grid.lab(c), grid.lab(seeds[a]));
                let db = crate::color::lab_distance_sq(grid.lab(c), grid.lab(seeds[b]));
                da.total_cmp(&db)
            })
            .unwrap();
        q[(best, c)] = 1.0;
    }
    q
}

/// Traces the IB frontier over `cfg.betas`.
pub fn ib_frontier(grid: &ChipGrid, mm: &MeaningModel, cfg: &FrontierConfig) -> Result<IBCurve> {
    if cfg.betas.is_empty() {
        return Err(Error::validation("beta schedule is empty"));
    }
    if cfg.betas.iter().any(|&b| !(b >= 1.0) || !b.is_finite()) {
        return Err(Error::validation("every beta must be finite and at least 1"));
    }
    if cfg.betas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("beta schedule must be strictly descending"));
    }
    if mm.len() != grid.len() {
        return Err(Error::dimension("meaning model and grid sizes differ"));
    }
    let ch = Channel::new(grid, mm);
    let mut q = initial_encoder(grid, cfg.max_words.unwrap_or(grid.len()).max(1));
    let mut points = Vec::with_capacity(cfg.betas.len());
    let mut encoders = Vec::with_capacity(cfg.betas.len());

    for &beta in &cfg.betas {
        let mut eval = evaluate(&q, &ch);
        let mut objective = (eval.complexity - beta * eval.accuracy) / LN2;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < cfg.max_sweeps {
            q = update(&eval, &ch, beta);
            eval = evaluate(&q, &ch);
            sweeps += 1;
            let next = (eval.complexity - beta * eval.accuracy) / LN2;
            if !next.is_finite() {
                return Err(Error::Numerical(format!("objective diverged at beta {beta}")));
            }
            let delta = (next - objective).abs();
            objective = next;
            if delta < cfg.tol {
                converged = true;
                break;
            }
        }
        q = compact(q, &eval);
        points.push(FrontierPoint {
            beta,
            complexity: eval.complexity / LN2,
            accuracy: eval.accuracy / LN2,
            converged,
            sweeps,
            num_words: q.rows(),
        });
        encoders.push(if cfg.keep_encoders {
            Some(NamingSystem::new(q.clone())?)
        } else {
            None
        });
    }
    Ok(IBCurve::from_points(points, encoders))
}

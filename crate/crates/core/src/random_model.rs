//! Random Gaussian-kernel naming systems (`q(w|c) ∝ exp(−η‖x_c − x_w‖²)`),
//! filtered to a complexity range and split by similarity to reference
//! languages.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::color::{lab_distance_sq, ChipGrid, MeaningModel};
use crate::error::{Error, Result};
use crate::ib::{complexity, epsilon_for_point, ib_point, min_gnid_to_set, EpsilonMethod, IBCurve, IBPoint, NamingSystem};
use crate::matrix::Matrix;
use crate::seeds;

pub const ETA_RANGE: RangeInclusive<f64> = 0.001..=0.005;
/// Complexity range of the reference languages, in bits.
pub const WCS_COMPLEXITY_RANGE: (f64, f64) = (0.84, 2.65);
pub const DEFAULT_GNID_THRESHOLD: f64 = 0.29;
pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 3..=10;
pub const DEFAULT_PER_K: usize = 100;
/// Consecutive rejections tolerated for one slot (a 99.9% rejection rate).
pub const REJECTION_WINDOW: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct RMParams {
    pub num_words: usize,
    pub eta: f64,
    pub prototypes: Vec<usize>,
}

/// Builds the kernel encoder for explicit parameters.
pub fn kernel_system(grid: &ChipGrid, params: &RMParams) -> Result<NamingSystem> {
    let k = params.prototypes.len();
    if k == 0 || k != params.num_words {
        return Err(Error::validation("prototype count must equal the word count"));
    }
    if !(params.eta > 0.0 && params.eta.is_finite()) {
        return Err(Error::validation(format!("eta must be positive, got {}", params.eta)));
    }
    let n = grid.len();
    let mut m = Matrix::zeros(k, n);
    let mut logits = vec![0.0; k];
    for c in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (w, &proto) in params.prototypes.iter().enumerate() {
            if proto >= n {
                return Err(Error::validation(format!("prototype {proto} outside the grid")));
            }
            logits[w] = -params.eta * lab_distance_sq(grid.lab(c), grid.lab(proto));
            max = max.max(logits[w]);
        }
        let mut z = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            z += *l;
        }
        for w in 0..k {
            m[(w, c)] = logits[w] / z;
        }
    }
    NamingSystem::new(m)
}

/// Samples η and `k` distinct prototype chips from the stream `seed`.
pub fn sample_rm_system(grid: &ChipGrid, k: usize, seed: u64) -> Result<(RMParams, NamingSystem)> {
    if k == 0 || k > grid.len() {
        return Err(Error::validation(format!(
            "word count must be in 1..={}, got {k}",
            grid.len()
        )));
    }
    let mut rng = seeds::stream(seed, &[]);
    let eta = rng.gen_range(ETA_RANGE);
    let prototypes = index::sample(&mut rng, grid.len(), k).into_vec();
    let params = RMParams {
        num_words: k,
        eta,
        prototypes,
    };
    let sys = kernel_system(grid, &params)?;
    Ok((params, sys))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RMLabel {
    /// Closest reference language within the gNID threshold.
    Similar,
    Dissimilar,
}

impl RMLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RMLabel::Similar => "RM_s",
            RMLabel::Dissimilar => "RM_d",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RMSystem {
    pub seed: u64,
    pub params: RMParams,
    pub system: NamingSystem,
    pub point: IBPoint,
    pub min_gnid: f64,
    pub neighbor: usize,
    pub label: RMLabel,
}

#[derive(Clone, Debug)]
pub struct RMBatchConfig {
    pub per_k: usize,
    pub k_range: RangeInclusive<usize>,
    pub complexity_range: (f64, f64),
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RMBatchConfig {
    fn default() -> Self {
        RMBatchConfig {
            per_k: DEFAULT_PER_K,
            k_range: DEFAULT_K_RANGE,
            complexity_range: WCS_COMPLEXITY_RANGE,
            threshold: DEFAULT_GNID_THRESHOLD,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RMBatch {
    pub systems: Vec<RMSystem>,
    pub threshold: f64,
}

impl RMBatch {
    pub fn dissimilar_fraction(&self) -> f64 {
        if self.systems.is_empty() {
            return 0.0;
        }
        let d = self
            .systems
            .iter()
            .filter(|s| s.label == RMLabel::Dissimilar)
            .count();
        d as f64 / self.systems.len() as f64
    }

    pub fn with_label(&self, label: RMLabel) -> impl Iterator<Item = &RMSystem> + '_ {
        self.systems.iter().filter(move |s| s.label == label)
    }

    /// Re-splits the batch at a different threshold.
    pub fn relabel(&mut self, threshold: f64) {
        self.threshold = threshold;
        for s in &mut self.systems {
            s.label = label_for(s.min_gnid, threshold);
        }
    }

    /// CSV `K,seed,eta,prototypes,complexity,accuracy,epsilon,min_gnid,label`.
    pub fn write_manifest<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "K", "seed", "eta", "prototypes", "complexity", "accuracy", "epsilon", "min_gnid", "label",
        ])?;
        for s in &self.systems {
            let protos = s
                .params
                .prototypes
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                s.params.num_words.to_string(),
                s.seed.to_string(),
                format!("{:?}", s.params.eta),
                protos,
                format!("{:?}", s.point.complexity),
                format!("{:?}", s.point.accuracy),
                format!("{:?}", s.point.epsilon.unwrap_or(f64::NAN)),
                format!("{:?}", s.min_gnid),
                s.label.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn label_for(min_gnid: f64, threshold: f64) -> RMLabel {
    if min_gnid < threshold {
        RMLabel::Similar
    } else {
        RMLabel::Dissimilar
    }
}

/// Draws one in-range system for slot `(k, slot)`, resampling η and
/// prototypes jointly on rejection.
fn sample_in_range(grid: &ChipGrid, k: usize, slot: usize, cfg: &RMBatchConfig) -> Result<(u64, RMParams, NamingSystem, f64)> {
    let (lo, hi) = cfg.complexity_range;
    let mut last = f64::NAN;
    for attempt in 0..REJECTION_WINDOW {
        let seed = seeds::derive_seed(cfg.seed, &[k as u64, slot as u64, attempt as u64]);
        let (params, sys) = sample_rm_system(grid, k, seed)?;
        let cx = complexity(&sys, grid)?;
        if (lo..=hi).contains(&cx) {
            return Ok((seed, params, sys, cx));
        }
        last = cx;
    }
    Err(Error::validation(format!(
        "K={k}: {REJECTION_WINDOW} consecutive samples fell outside complexity range [{lo}, {hi}] \
         (last complexity {last:.3}); rejection rate exceeds 99.9%"
    )))
}

/// Generates `per_k` in-range systems for each K and scores them against
/// the reference languages and the frontier.
pub fn generate_rm_batch(
    grid: &ChipGrid,
    mm: &MeaningModel,
    curve: &IBCurve,
    references: &[NamingSystem],
    cfg: &RMBatchConfig,
) -> Result<RMBatch> {
    if cfg.per_k == 0 {
        return Err(Error::validation("per_k must be at least 1"));
    }
    if references.is_empty() {
        return Err(Error::validation("reference language set is empty"));
    }
    let slots: Vec<(usize, usize)> = cfg
        .k_range
        .clone()
        .flat_map(|k| (0..cfg.per_k).map(move |i| (k, i)))
        .collect();
    let systems = slots
        .par_iter()
        .map(|&(k, slot)| -> Result<RMSystem> {
            let (seed, params, system, _) = sample_in_range(grid, k, slot, cfg)?;
            let mut point = ib_point(&system, grid, mm)?;
            let fit = epsilon_for_point(point.complexity, point.accuracy, curve, EpsilonMethod::ObjectiveGap)?;
            point.epsilon = Some(fit.epsilon);
            let (min_gnid, neighbor) = min_gnid_to_set(&system, references, grid)?;
            Ok(RMSystem {
                seed,
                params,
                system,
                point,
                min_gnid,
                neighbor,
                label: label_for(min_gnid, cfg.threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RMBatch {
        systems,
        threshold: cfg.threshold,
    })
}

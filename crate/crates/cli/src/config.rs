use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use nilcolor::color::DEFAULT_SIGMA_SQ;
use nilcolor::ib::{offset_geometric_schedule, FrontierConfig};
use nilcolor::nil::{GameConfig, Variant};
use nilcolor::random_model::{DEFAULT_GNID_THRESHOLD, DEFAULT_PER_K};

pub const CONFIG_HELP: &str = "\
TOML file of settings; every key is optional:
  sigma_sq = 64.0                 meaning model width (CIELAB distance²)
  frontier_points = 1500          β values in the annealing schedule
  frontier_max_offset = 8192.0    largest β − 1
  frontier_min_offset = 0.001     smallest β − 1 (β = 1 is always appended)
  frontier_tol = 1e-6             per-β convergence tolerance
  frontier_max_sweeps = 5000
  reward_sigma_sq = 256.0         listener reward kernel width
  steps_per_phase = 1000
  learning_listener_steps = 1000
  batch = 50
  learning_rate = 0.005
  hidden = 25
  input_scale = 0.2               speaker input multiplier on CIELAB
  dataset_size = 300
  max_generations = 200
  window = 10
  tolerance = 0.1                 bits
  baseline = true                 batch-mean REINFORCE baseline
  argmax_transmission = false
  transmission_with_replacement = false
  rm_per_k = 100
  rm_threshold = 0.29             gNID split between RM_s and RM_d";

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub sigma_sq: Option<f64>,
    pub frontier_points: Option<usize>,
    pub frontier_max_offset: Option<f64>,
    pub frontier_min_offset: Option<f64>,
    pub frontier_tol: Option<f64>,
    pub frontier_max_sweeps: Option<usize>,
    pub reward_sigma_sq: Option<f64>,
    pub steps_per_phase: Option<usize>,
    pub learning_listener_steps: Option<usize>,
    pub batch: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden: Option<usize>,
    pub input_scale: Option<f64>,
    pub dataset_size: Option<usize>,
    pub max_generations: Option<usize>,
    pub window: Option<usize>,
    pub tolerance: Option<f64>,
    pub baseline: Option<bool>,
    pub argmax_transmission: Option<bool>,
    pub transmission_with_replacement: Option<bool>,
    pub rm_per_k: Option<usize>,
    pub rm_threshold: Option<f64>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            anyhow::Error::new(nilcolor::Error::Validation(format!("{}: {e}", path.display())))
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq.unwrap_or(DEFAULT_SIGMA_SQ)
    }

    pub fn frontier(&self) -> FrontierConfig {
        let mut cfg = FrontierConfig::default();
        if self.frontier_points.is_some() || self.frontier_max_offset.is_some() || self.frontier_min_offset.is_some() {
            cfg.betas = offset_geometric_schedule(
                self.frontier_max_offset.unwrap_or(8192.0),
                self.frontier_min_offset.unwrap_or(1e-3),
                self.frontier_points.unwrap_or(1500),
            );
        }
        if let Some(t) = self.frontier_tol {
            cfg.tol = t;
        }
        if let Some(s) = self.frontier_max_sweeps {
            cfg.max_sweeps = s;
        }
        cfg
    }

    pub fn game(&self, num_words: usize, variant: Variant) -> GameConfig {
        let mut g = GameConfig::new(num_words, variant);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { g.$f = v; })* };
        }
        set!(
            reward_sigma_sq,
            steps_per_phase,
            learning_listener_steps,
            batch,
            learning_rate,
            hidden,
            input_scale,
            dataset_size,
            max_generations,
            window,
            tolerance,
            baseline,
            argmax_transmission,
            transmission_with_replacement
        );
        g
    }

    pub fn rm_per_k(&self) -> usize {
        self.rm_per_k.unwrap_or(DEFAULT_PER_K)
    }

    pub fn rm_threshold(&self) -> f64 {
        self.rm_threshold.unwrap_or(DEFAULT_GNID_THRESHOLD)
    }
}

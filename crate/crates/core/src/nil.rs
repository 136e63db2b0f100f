//! Neural iterated learning: generations of speaker/listener pairs that
//! learn from the previous speaker's names, play a signaling game, and pass
//! a freshly named dataset on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::agents::{
    reinforce_update, sample_categorical, speaker_forward, train_supervised, Agent, AgentParams, Episode, Input,
    DEFAULT_BATCH, DEFAULT_HIDDEN, DEFAULT_INPUT_SCALE, DEFAULT_LEARNING_RATE,
};
use crate::color::{lab_distance_sq, ChipGrid, MeaningModel};
use crate::error::{Error, Result};
use crate::ib::{epsilon_for_point, ib_point, min_gnid_to_set, EpsilonMethod, IBCurve, IBPoint, NamingSystem};
use crate::matrix::Matrix;
use crate::seeds;

pub const DEFAULT_DATASET_SIZE: usize = 300;
pub const DEFAULT_STEPS_PER_PHASE: usize = 1000;
pub const DEFAULT_MAX_GENERATIONS: usize = 200;
pub const CONVERGENCE_WINDOW: usize = 10;
/// Bits.
pub const CONVERGENCE_TOLERANCE: f64 = 0.1;
/// Width of the listener reward kernel. At the meaning model's width (64)
/// almost every guess earns nothing and communication never gets started.
pub const DEFAULT_REWARD_SIGMA_SQ: f64 = 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Learning, interaction and transmission every generation.
    IlC,
    /// Learning and transmission only.
    Il,
    /// A single generation of learning and interaction.
    C,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::IlC, Variant::Il, Variant::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::IlC => "IL+C",
            Variant::Il => "IL",
            Variant::C => "C",
        }
    }

    fn code(self) -> u64 {
        match self {
            Variant::IlC => 0,
            Variant::Il => 1,
            Variant::C => 2,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IL+C" | "ILC" | "IL_C" => Ok(Variant::IlC),
            "IL" => Ok(Variant::Il),
            "C" => Ok(Variant::C),
            other => Err(Error::validation(format!("unknown variant {other:?}; expected IL+C, IL or C"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameConfig {
    pub num_words: usize,
    pub variant: Variant,
    pub reward_sigma_sq: f64,
    pub steps_per_phase: usize,
    /// Listener-only rounds in the learning phase.
    pub learning_listener_steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub input_scale: f64,
    pub dataset_size: usize,
    pub max_generations: usize,
    pub window: usize,
    pub tolerance: f64,
    /// Subtract the batch-mean reward in REINFORCE.
    pub baseline: bool,
    /// Name transmitted chips by the speaker's most likely word instead of sampling.
    pub argmax_transmission: bool,
    /// Draw transmitted chips from the prior with replacement.
    pub transmission_with_replacement: bool,
}

impl GameConfig {
    pub fn new(num_words: usize, variant: Variant) -> Self {
        GameConfig {
            num_words,
            variant,
            reward_sigma_sq: DEFAULT_REWARD_SIGMA_SQ,
            steps_per_phase: DEFAULT_STEPS_PER_PHASE,
            learning_listener_steps: DEFAULT_STEPS_PER_PHASE,
            batch: DEFAULT_BATCH,
            learning_rate: DEFAULT_LEARNING_RATE,
            hidden: DEFAULT_HIDDEN,
            input_scale: DEFAULT_INPUT_SCALE,
            dataset_size: DEFAULT_DATASET_SIZE,
            max_generations: DEFAULT_MAX_GENERATIONS,
            window: CONVERGENCE_WINDOW,
            tolerance: CONVERGENCE_TOLERANCE,
            baseline: true,
            argmax_transmission: false,
            transmission_with_replacement: false,
        }
    }

    pub fn validate(&self, grid: &ChipGrid) -> Result<()> {
        if self.num_words == 0 {
            return Err(Error::validation("K must be at least 1"));
        }
        if !(self.reward_sigma_sq > 0.0 && self.reward_sigma_sq.is_finite()) {
            return Err(Error::validation("reward_sigma_sq must be positive"));
        }
        if self.steps_per_phase == 0 || self.batch == 0 || self.hidden == 0 {
            return Err(Error::validation("steps_per_phase, batch and hidden must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.max_generations == 0 || self.window == 0 {
            return Err(Error::validation("max_generations and window must be at least 1"));
        }
        if self.dataset_size == 0 || (!self.transmission_with_replacement && self.dataset_size > grid.len()) {
            return Err(Error::validation(format!(
                "dataset_size must be in 1..={} when sampling without replacement",
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Listener reward `exp(−‖x_c − x_ĉ‖² / (2σ²))`.
pub fn reward(grid: &ChipGrid, c: usize, c_hat: usize, sigma_sq: f64) -> f64 {
    (-lab_distance_sq(grid.lab(c), grid.lab(c_hat)) / (2.0 * sigma_sq)).exp()
}

/// Chip/word pairs produced by one speaker for the next generation.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionDataset {
    pub pairs: Vec<(usize, usize)>,
    pub num_words: usize,
}

impl TransmissionDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum InitMode<'a> {
    /// Each sampled chip gets a uniformly random word.
    Uniform,
    /// Words are sampled from an existing system's encoder.
    FromSystem(&'a NamingSystem),
}

fn sample_chips<R: Rng>(grid: &ChipGrid, size: usize, with_replacement: bool, rng: &mut R) -> Result<Vec<usize>> {
    let prior = grid.prior();
    if with_replacement {
        let dist = WeightedIndex::new(prior).map_err(|e| Error::validation(format!("prior: {e}")))?;
        return Ok((0..size).map(|_| dist.sample(rng)).collect());
    }
    let support = prior.iter().filter(|&&p| p > 0.0).count();
    if size > support {
        return Err(Error::validation(format!(
            "cannot draw {size} distinct chips from a prior supported on {support}"
        )));
    }
    let picked = index::sample_weighted(rng, grid.len(), |i| prior[i], size)
        .map_err(|e| Error::validation(format!("prior: {e}")))?;
    Ok(picked.into_vec())
}

pub fn init_dataset<R: Rng>(
    grid: &ChipGrid,
    num_words: usize,
    mode: InitMode,
    size: usize,
    rng: &mut R,
) -> Result<TransmissionDataset> {
    if num_words == 0 {
        return Err(Error::validation("K must be at least 1"));
    }
    if let InitMode::FromSystem(sys) = mode {
        if sys.num_words() != num_words || sys.num_chips() != grid.len() {
            return Err(Error::dimension(format!(
                "initial system is {}×{}, expected {}×{}",
                sys.num_words(),
                sys.num_chips(),
                num_words,
                grid.len()
            )));
        }
    }
    let chips = sample_chips(grid, size, false, rng)?;
    let words = Uniform::new(0, num_words);
    let pairs = chips
        .into_iter()
        .map(|c| {
            let w = match mode {
                InitMode::Uniform => words.sample(rng),
                InitMode::FromSystem(sys) => sample_categorical(&sys.column(c), rng),
            };
            (c, w)
        })
        .collect();
    Ok(TransmissionDataset { pairs, num_words })
}

/// Which agents receive a REINFORCE update after a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateFlags {
    pub speaker: bool,
    pub listener: bool,
}

impl UpdateFlags {
    pub const NONE: UpdateFlags = UpdateFlags { speaker: false, listener: false };
    pub const LISTENER: UpdateFlags = UpdateFlags { speaker: false, listener: true };
    pub const BOTH: UpdateFlags = UpdateFlags { speaker: true, listener: true };
}

/// Precomputed state shared by every round of one chain.
pub struct Game<'a> {
    grid: &'a ChipGrid,
    cfg: &'a GameConfig,
    rewards: Matrix,
    prior: WeightedIndex<f64>,
}

impl<'a> Game<'a> {
    pub fn new(grid: &'a ChipGrid, cfg: &'a GameConfig) -> Result<Self> {
        cfg.validate(grid)?;
        let rewards = Matrix::from_fn(grid.len(), grid.len(), |c, h| reward(grid, c, h, cfg.reward_sigma_sq));
        let prior = WeightedIndex::new(grid.prior()).map_err(|e| Error::validation(format!("prior: {e}")))?;
        Ok(Game { grid, cfg, rewards, prior })
    }

    pub fn grid(&self) -> &ChipGrid {
        self.grid
    }

    pub fn config(&self) -> &GameConfig {
        self.cfg
    }

    pub fn reward(&self, c: usize, c_hat: usize) -> f64 {
        self.rewards[(c, c_hat)]
    }
}

/// Plays one batch of the signaling game and returns the mean reward.
pub fn play_signaling_round<R: Rng>(
    game: &Game,
    speaker: &mut Agent,
    listener: &mut Agent,
    rng: &mut R,
    flags: UpdateFlags,
) -> Result<f64> {
    let k = game.cfg.num_words;
    if speaker.params.n_out() != k || listener.params.n_in() != k || listener.params.n_out() != game.grid.len() {
        return Err(Error::dimension("agents do not match the game's K and grid"));
    }
    let batch = game.cfg.batch;
    let chips: Vec<usize> = (0..batch).map(|_| game.prior.sample(rng)).collect();
    let words: Vec<usize> = chips
        .iter()
        .map(|&c| sample_categorical(&speaker_forward(&speaker.params, game.grid.lab(c)), rng))
        .collect();
    // The listener's input is one-hot, so each distinct word needs one forward pass.
    let mut listener_probs: Vec<Option<Vec<f64>>> = vec![None; k];
    let guesses: Vec<usize> = words
        .iter()
        .map(|&w| {
            let probs = listener_probs[w].get_or_insert_with(|| listener.params.forward(Input::OneHot(w)).probs());
            sample_categorical(probs, rng)
        })
        .collect();
    let rewards: Vec<f64> = chips.iter().zip(&guesses).map(|(&c, &g)| game.reward(c, g)).collect();
    if flags.listener {
        let episodes: Vec<Episode> = (0..batch)
            .map(|i| Episode { input: Input::OneHot(words[i]), action: guesses[i], reward: rewards[i] })
            .collect();
        reinforce_update(listener, &episodes, game.cfg.baseline)?;
    }
    if flags.speaker {
        let episodes: Vec<Episode> = (0..batch)
            .map(|i| Episode { input: Input::Features(game.grid.lab(chips[i])), action: words[i], reward: rewards[i] })
            .collect();
        reinforce_update(speaker, &episodes, game.cfg.baseline)?;
    }
    Ok(rewards.iter().sum::<f64>() / batch as f64)
}

/// The speaker's full encoder over the grid.
pub fn speaker_system(params: &AgentParams, grid: &ChipGrid) -> Result<NamingSystem> {
    let k = params.n_out();
    let mut m = Matrix::zeros(k, grid.len());
    for c in 0..grid.len() {
        let probs = speaker_forward(params, grid.lab(c));
        for w in 0..k {
            m[(w, c)] = probs[w];
        }
    }
    NamingSystem::from_weights(m)
}

/// Names `cfg.dataset_size` prior-sampled chips with the speaker.
pub fn transmit<R: Rng>(speaker: &AgentParams, grid: &ChipGrid, cfg: &GameConfig, rng: &mut R) -> Result<TransmissionDataset> {
    let chips = sample_chips(grid, cfg.dataset_size, cfg.transmission_with_replacement, rng)?;
    let pairs = chips
        .into_iter()
        .map(|c| {
            let probs = speaker_forward(speaker, grid.lab(c));
            let w = if cfg.argmax_transmission {
                (0..probs.len()).fold(0, |best, w| if probs[w] > probs[best] { w } else { best })
            } else {
                sample_categorical(&probs, rng)
            };
            (c, w)
        })
        .collect();
    Ok(TransmissionDataset { pairs, num_words: cfg.num_words })
}

/// True when the last `window` points each span less than `tol` bits in
/// both complexity and accuracy.
pub fn has_converged(points: &[IBPoint], window: usize, tol: f64) -> bool {
    if window == 0 || points.len() < window {
        return false;
    }
    let tail = &points[points.len() - window..];
    let spread = |f: fn(&IBPoint) -> f64| {
        let (lo, hi) = tail
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    spread(|p| p.complexity) < tol && spread(|p| p.accuracy) < tol
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub point: IBPoint,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub trajectory: Vec<GenerationRecord>,
    pub final_system: NamingSystem,
    pub converged: bool,
    pub generations: usize,
}

impl RunRecord {
    pub fn final_point(&self) -> IBPoint {
        self.trajectory.last().map(|g| g.point).unwrap_or(IBPoint::new(0.0, 0.0))
    }

    /// CSV `generation,complexity,accuracy,mean_reward`.
    pub fn write_trajectory<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "complexity", "accuracy", "mean_reward"])?;
        for g in &self.trajectory {
            w.write_record([
                g.generation.to_string(),
                g.point.complexity.to_string(),
                g.point.accuracy.to_string(),
                g.mean_reward.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fresh_agents<R: Rng>(cfg: &GameConfig, grid: &ChipGrid, rng: &mut R) -> (Agent, Agent) {
    let speaker = AgentParams::speaker(cfg.num_words, cfg.hidden, rng).with_input_scale(cfg.input_scale);
    let listener = AgentParams::listener(cfg.num_words, grid.len(), cfg.hidden, rng);
    (
        Agent::new(speaker, cfg.learning_rate),
        Agent::new(listener, cfg.learning_rate),
    )
}

/// Runs one chain from `init` until the stopping rule holds or the
/// generation cap is reached. The C variant stops after one generation.
pub fn run_nil_chain(
    grid: &ChipGrid,
    mm: &MeaningModel,
    cfg: &GameConfig,
    init: &TransmissionDataset,
    seed: u64,
) -> Result<RunRecord> {
    let game = Game::new(grid, cfg)?;
    if init.is_empty() && cfg.variant != Variant::C {
        return Err(Error::validation("the initial dataset is empty"));
    }
    if init.num_words != cfg.num_words || init.pairs.iter().any(|&(c, w)| c >= grid.len() || w >= cfg.num_words) {
        return Err(Error::validation("initial dataset does not match K and the grid"));
    }
    let mut data = init.clone();
    let mut trajectory = Vec::new();
    let mut points = Vec::new();
    let mut converged = false;
    let mut last_system = None;

    for generation in 0..cfg.max_generations {
        let mut rng = seeds::stream(seed, &[generation as u64]);
        let (mut speaker, mut listener) = fresh_agents(cfg, grid, &mut rng);

        train_supervised(&mut speaker, grid, &data.pairs, cfg.steps_per_phase, cfg.batch, &mut rng)?;
        let mut reward_sum = 0.0;
        let mut rounds = 0;
        for _ in 0..cfg.learning_listener_steps {
            reward_sum += play_signaling_round(&game, &mut speaker, &mut listener, &mut rng, UpdateFlags::LISTENER)?;
            rounds += 1;
        }
        if cfg.variant != Variant::Il {
            reward_sum = 0.0;
            rounds = 0;
            for _ in 0..cfg.steps_per_phase {
                reward_sum += play_signaling_round(&game, &mut speaker, &mut listener, &mut rng, UpdateFlags::BOTH)?;
                rounds += 1;
            }
        }

        let system = speaker_system(&speaker.params, grid)?;
        let point = ib_point(&system, grid, mm)?;
        points.push(point);
        trajectory.push(GenerationRecord {
            generation,
            point,
            mean_reward: if rounds > 0 { reward_sum / rounds as f64 } else { f64::NAN },
        });
        last_system = Some(system);

        if cfg.variant == Variant::C {
            break;
        }
        if has_converged(&points, cfg.window, cfg.tolerance) {
            converged = true;
            break;
        }
        data = transmit(&speaker.params, grid, cfg, &mut rng)?;
    }
    let generations = trajectory.len();
    Ok(RunRecord {
        trajectory,
        final_system: last_system.expect("at least one generation runs"),
        converged,
        generations,
    })
}

/// Shared analysis inputs for experiment rows.
pub struct ExperimentContext<'a> {
    pub grid: &'a ChipGrid,
    pub mm: &'a MeaningModel,
    pub curve: &'a IBCurve,
    pub references: &'a [NamingSystem],
    pub reference_ids: &'a [String],
}

impl ExperimentContext<'_> {
    /// `(ε, min gNID, nearest reference id)` for a system.
    pub fn score(&self, system: &NamingSystem, point: &IBPoint) -> Result<(f64, f64, String)> {
        let fit = epsilon_for_point(point.complexity, point.accuracy, self.curve, EpsilonMethod::ObjectiveGap)?;
        let (gnid, idx) = min_gnid_to_set(system, self.references, self.grid)?;
        let id = self.reference_ids.get(idx).cloned().unwrap_or_else(|| idx.to_string());
        Ok((fit.epsilon, gnid, id))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub variant: Variant,
    pub num_words: usize,
    pub seed: u64,
    pub generations: usize,
    pub converged: bool,
    pub complexity: f64,
    pub accuracy: f64,
    pub epsilon: f64,
    pub min_gnid: f64,
    pub wcs_neighbor: String,
}

impl ExperimentRow {
    pub fn key(&self) -> (Variant, usize, u64) {
        (self.variant, self.num_words, self.seed)
    }
}

pub const EXPERIMENT_HEADER: [&str; 10] = [
    "variant",
    "K",
    "seed",
    "generations",
    "converged",
    "complexity",
    "accuracy",
    "epsilon",
    "min_gnid",
    "wcs_neighbor",
];

pub fn write_experiment_table<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut sorted: Vec<&ExperimentRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPERIMENT_HEADER)?;
    for r in sorted {
        w.write_record([
            r.variant.as_str().to_string(),
            r.num_words.to_string(),
            r.seed.to_string(),
            r.generations.to_string(),
            r.converged.to_string(),
            r.complexity.to_string(),
            r.accuracy.to_string(),
            r.epsilon.to_string(),
            r.min_gnid.to_string(),
            r.wcs_neighbor.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_experiment_table<R: Read>(input: R) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(EXPERIMENT_HEADER.iter().copied()) {
        return Err(Error::format(format!("unexpected experiment header {:?}", headers)));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let num = |j: usize| -> Result<f64> {
            record[j].parse().map_err(|_| Error::format(format!("row {i}: bad {}", EXPERIMENT_HEADER[j])))
        };
        let int = |j: usize| -> Result<u64> {
            record[j].parse().map_err(|_| Error::format(format!("row {i}: bad {}", EXPERIMENT_HEADER[j])))
        };
        rows.push(ExperimentRow {
            variant: record[0].parse()?,
            num_words: int(1)? as usize,
            seed: int(2)?,
            generations: int(3)? as usize,
            converged: record[4].parse().map_err(|_| Error::format(format!("row {i}: bad converged")))?,
            complexity: num(5)?,
            accuracy: num(6)?,
            epsilon: num(7)?,
            min_gnid: num(8)?,
            wcs_neighbor: record[9].to_string(),
        });
    }
    Ok(rows)
}

/// Seed of chain `seed_index` in the `(variant, K)` cell.
pub fn chain_seed(base: u64, variant: Variant, num_words: usize, seed_index: u64) -> u64 {
    seeds::derive_seed(base, &[variant.code(), num_words as u64, seed_index])
}

/// Stream used to draw a chain's initial dataset, disjoint from its
/// per-generation streams.
pub fn init_stream(chain_seed: u64) -> rand_chacha::ChaCha8Rng {
    seeds::stream(chain_seed, &[u64::MAX])
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub cells: Vec<(Variant, usize)>,
    pub seeds_per_cell: u64,
    pub base_seed: u64,
    /// Template for every chain; `num_words` and `variant` are overridden per cell.
    pub config: GameConfig,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Completed rows (existing plus new), sorted by key.
    pub rows: Vec<ExperimentRow>,
    pub failures: Vec<((Variant, usize, u64), Error)>,
}

/// Runs every `(variant, K, seed)` chain of the plan that is not already in
/// `existing`, in parallel, and returns the merged table.
pub fn run_experiment(ctx: &ExperimentContext, plan: &ExperimentPlan, existing: &[ExperimentRow]) -> Result<ExperimentOutcome> {
    if plan.seeds_per_cell == 0 {
        return Err(Error::validation("seeds_per_cell must be at least 1"));
    }
    let mut done: BTreeMap<(Variant, usize, u64), ExperimentRow> =
        existing.iter().map(|r| (r.key(), r.clone())).collect();
    let pending: Vec<(Variant, usize, u64)> = plan
        .cells
        .iter()
        .flat_map(|&(v, k)| (0..plan.seeds_per_cell).map(move |s| (v, k, s)))
        .filter(|key| !done.contains_key(key))
        .collect();
    let results: Vec<_> = pending
        .par_iter()
        .map(|&(variant, k, s)| {
            let run = || -> Result<ExperimentRow> {
                let mut cfg = plan.config.clone();
                cfg.num_words = k;
                cfg.variant = variant;
                let seed = chain_seed(plan.base_seed, variant, k, s);
                let init = init_dataset(ctx.grid, k, InitMode::Uniform, cfg.dataset_size, &mut init_stream(seed))?;
                let record = run_nil_chain(ctx.grid, ctx.mm, &cfg, &init, seed)?;
                let point = record.final_point();
                let (epsilon, min_gnid, neighbor) = ctx.score(&record.final_system, &point)?;
                Ok(ExperimentRow {
                    variant,
                    num_words: k,
                    seed: s,
                    generations: record.generations,
                    converged: record.converged,
                    complexity: point.complexity,
                    accuracy: point.accuracy,
                    epsilon,
                    min_gnid,
                    wcs_neighbor: neighbor,
                })
            };
            ((variant, k, s), run())
        })
        .collect();
    let mut failures = Vec::new();
    for (key, res) in results {
        match res {
            Ok(row) => {
                done.insert(key, row);
            }
            Err(e) => failures.push((key, e)),
        }
    }
    Ok(ExperimentOutcome { rows: done.into_values().collect(), failures })
}

/// Before/after summary of a chain initialized from an existing system.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformRow {
    pub index: usize,
    pub num_words: usize,
    pub generations: usize,
    pub converged: bool,
    pub gnid_before: f64,
    pub gnid_after: f64,
    pub epsilon_before: f64,
    pub epsilon_after: f64,
}

/// Runs one IL+C chain per starting system, each seeded with a dataset
/// sampled from that system.
pub fn run_from_systems(
    ctx: &ExperimentContext,
    starts: &[NamingSystem],
    config: &GameConfig,
    base_seed: u64,
) -> Result<Vec<TransformRow>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| {
            let mut cfg = config.clone();
            cfg.num_words = start.num_words();
            let seed = seeds::derive_seed(base_seed, &[3, i as u64]);
            let init = init_dataset(
                ctx.grid,
                cfg.num_words,
                InitMode::FromSystem(start),
                cfg.dataset_size,
                &mut init_stream(seed),
            )?;
            let before_point = ib_point(start, ctx.grid, ctx.mm)?;
            let (epsilon_before, gnid_before, _) = ctx.score(start, &before_point)?;
            let record = run_nil_chain(ctx.grid, ctx.mm, &cfg, &init, seed)?;
            let (epsilon_after, gnid_after, _) = ctx.score(&record.final_system, &record.final_point())?;
            Ok(TransformRow {
                index: i,
                num_words: cfg.num_words,
                generations: record.generations,
                converged: record.converged,
                gnid_before,
                gnid_after,
                epsilon_before,
                epsilon_after,
            })
        })
        .collect()
}

pub fn write_transform_table<W: Write>(rows: &[TransformRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index",
        "K",
        "generations",
        "converged",
        "gnid_before",
        "gnid_after",
        "epsilon_before",
        "epsilon_after",
    ])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.num_words.to_string(),
            r.generations.to_string(),
            r.converged.to_string(),
            r.gnid_before.to_string(),
            r.gnid_after.to_string(),
            r.epsilon_before.to_string(),
            r.epsilon_after.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Chip;

    fn two_chip_grid() -> ChipGrid {
        let chips = vec![
            Chip { index: 0, row: 'C', column: 1, lab: [30.0, 0.0, 0.0] },
            Chip { index: 1, row: 'C', column: 2, lab: [80.0, 60.0, 0.0] },
        ];
        ChipGrid::new(chips, None).unwrap()
    }

    #[test]
    fn reward_examples() {
        let grid = ChipGrid::bundled();
        assert_eq!(reward(&grid, 17, 17, 64.0), 1.0);
        let d2 = lab_distance_sq(grid.lab(3), grid.lab(40));
        let expected = (-d2 / 128.0).exp();
        assert!((reward(&grid, 3, 40, 64.0) - expected).abs() < 1e-15);
        // Choose σ² so that d² = 2σ².
        assert!((reward(&grid, 3, 40, d2 / 2.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn uniform_init_with_one_word_is_constant() {
        let grid = ChipGrid::bundled();
        let mut rng = seeds::stream(1, &[]);
        let d = init_dataset(&grid, 1, InitMode::Uniform, 300, &mut rng).unwrap();
        assert_eq!(d.len(), 300);
        assert!(d.pairs.iter().all(|&(_, w)| w == 0));
        let mut chips: Vec<usize> = d.pairs.iter().map(|p| p.0).collect();
        chips.sort_unstable();
        chips.dedup();
        assert_eq!(chips.len(), 300);
        assert!(init_dataset(&grid, 3, InitMode::Uniform, 331, &mut rng).is_err());
    }

    #[test]
    fn system_init_follows_a_deterministic_system() {
        let grid = ChipGrid::bundled();
        let labels: Vec<usize> = (0..grid.len()).map(|c| (c * 7) % 4).collect();
        let sys = NamingSystem::from_labels(&labels, 4).unwrap();
        let mut rng = seeds::stream(2, &[]);
        let d = init_dataset(&grid, 4, InitMode::FromSystem(&sys), 300, &mut rng).unwrap();
        assert!(d.pairs.iter().all(|&(c, w)| labels[c] == w));
    }

    #[test]
    fn uniform_init_words_pass_chi_square() {
        let grid = ChipGrid::bundled();
        let k = 5;
        let mut counts = vec![0usize; k];
        let mut rng = seeds::stream(3, &[]);
        let mut total = 0;
        while total < 10_000 {
            let d = init_dataset(&grid, k, InitMode::Uniform, 100, &mut rng).unwrap();
            for &(_, w) in &d.pairs {
                counts[w] += 1;
            }
            total += d.len();
        }
        let expected = total as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Upper 1% point of χ² with 4 degrees of freedom.
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn convergence_rule() {
        let same = vec![IBPoint::new(1.2, 0.9); 10];
        assert!(has_converged(&same, 10, 0.1));
        assert!(!has_converged(&same[..9], 10, 0.1));
        let mut drift = same.clone();
        drift[4].accuracy += 0.2;
        assert!(!has_converged(&drift, 10, 0.1));
        drift.push(IBPoint::new(1.2, 0.9));
        assert!(!has_converged(&drift, 10, 0.1));
    }

    #[test]
    fn separable_pair_earns_full_reward() {
        let grid = two_chip_grid();
        let mut cfg = GameConfig::new(2, Variant::IlC);
        cfg.dataset_size = 2;
        let game = Game::new(&grid, &cfg).unwrap();
        // Speaker: word = chip via lightness; listener: chip = word.
        let mut s = AgentParams::zeros(crate::agents::Role::Speaker, 3, 1, 2).with_input_scale(0.01);
        s.w1_mut().copy_from_slice(&[100.0, 0.0, 0.0]);
        s.b1_mut()[0] = -55.0;
        s.w2_mut().copy_from_slice(&[-40.0, 40.0]);
        s.b2_mut().copy_from_slice(&[20.0, -20.0]);
        let mut l = AgentParams::zeros(crate::agents::Role::Listener, 2, 1, 2);
        l.w1_mut().copy_from_slice(&[-40.0, 40.0]);
        l.w2_mut().copy_from_slice(&[-40.0, 40.0]);
        l.b2_mut().copy_from_slice(&[20.0, -20.0]);
        let mut speaker = Agent::new(s, 0.005);
        let mut listener = Agent::new(l, 0.005);
        let before = (speaker.clone(), listener.clone());
        let mut rng = seeds::stream(4, &[]);
        let mut mean = 0.0;
        for _ in 0..20 {
            mean += play_signaling_round(&game, &mut speaker, &mut listener, &mut rng, UpdateFlags::NONE).unwrap() / 20.0;
        }
        assert!(mean > 0.99, "{mean}");
        assert_eq!((speaker, listener), before);
    }

    #[test]
    fn untrained_agents_earn_the_uniform_guessing_reward() {
        let grid = ChipGrid::bundled();
        let mut cfg = GameConfig::new(3, Variant::IlC);
        cfg.batch = 2000;
        let game = Game::new(&grid, &cfg).unwrap();
        let mut speaker = Agent::new(AgentParams::zeros(crate::agents::Role::Speaker, 3, 25, 3), 0.005);
        let mut listener = Agent::new(AgentParams::zeros(crate::agents::Role::Listener, 3, 25, grid.len()), 0.005);
        let n = grid.len();
        let exact: f64 = (0..n)
            .map(|c| grid.prior()[c] * (0..n).map(|h| game.reward(c, h)).sum::<f64>() / n as f64)
            .sum();
        let mut rng = seeds::stream(5, &[]);
        let rounds = 50;
        let mut mean = 0.0;
        for _ in 0..rounds {
            mean += play_signaling_round(&game, &mut speaker, &mut listener, &mut rng, UpdateFlags::NONE).unwrap();
        }
        mean /= rounds as f64;
        // 100k samples of a reward bounded in [0,1].
        assert!((mean - exact).abs() < 0.005, "{mean} vs {exact}");
    }

    fn quick_config(k: usize, variant: Variant) -> GameConfig {
        let mut cfg = GameConfig::new(k, variant);
        cfg.steps_per_phase = 40;
        cfg.learning_listener_steps = 40;
        cfg.max_generations = 4;
        cfg.window = 3;
        cfg
    }

    #[test]
    fn communication_variant_runs_one_generation() {
        let grid = ChipGrid::bundled();
        let mm = MeaningModel::new(&grid, 64.0).unwrap();
        let cfg = quick_config(3, Variant::C);
        let init = init_dataset(&grid, 3, InitMode::Uniform, 300, &mut seeds::stream(6, &[])).unwrap();
        let rec = run_nil_chain(&grid, &mm, &cfg, &init, 6).unwrap();
        assert_eq!(rec.generations, 1);
        assert_eq!(rec.trajectory.len(), 1);
        assert!(!rec.converged);
    }

    #[test]
    fn chains_are_deterministic_and_valid() {
        let grid = ChipGrid::bundled();
        let mm = MeaningModel::new(&grid, 64.0).unwrap();
        let cfg = quick_config(4, Variant::IlC);
        let init = init_dataset(&grid, 4, InitMode::Uniform, 300, &mut seeds::stream(7, &[])).unwrap();
        let a = run_nil_chain(&grid, &mm, &cfg, &init, 7).unwrap();
        let b = run_nil_chain(&grid, &mm, &cfg, &init, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generations, a.trajectory.len());
        assert!(a.generations <= 4);
        let points: Vec<IBPoint> = a.trajectory.iter().map(|g| g.point).collect();
        assert_eq!(a.converged, has_converged(&points, 3, 0.1));
        for g in &a.trajectory {
            assert!(g.point.complexity >= 0.0 && g.point.complexity <= 2.0 + 1e-9);
        }
        let mut out = Vec::new();
        a.write_trajectory(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("generation,complexity,accuracy,mean_reward\n"));
        assert_eq!(text.lines().count(), a.generations + 1);
    }

    #[test]
    fn experiment_table_is_resumable() {
        let grid = ChipGrid::bundled();
        let mm = MeaningModel::new(&grid, 64.0).unwrap();
        let cfg = crate::ib::FrontierConfig {
            betas: crate::ib::geometric_schedule(64.0, 2.0, 6),
            max_words: Some(20),
            ..Default::default()
        };
        let curve = crate::ib::ib_frontier(&grid, &mm, &cfg).unwrap();
        let refs = vec![crate::random_model::sample_rm_system(&grid, 4, 1).unwrap().1];
        let ids = vec!["ref".to_string()];
        let ctx = ExperimentContext { grid: &grid, mm: &mm, curve: &curve, references: &refs, reference_ids: &ids };
        let mut template = quick_config(3, Variant::IlC);
        template.max_generations = 2;
        let plan = ExperimentPlan {
            cells: vec![(Variant::IlC, 3), (Variant::Il, 3)],
            seeds_per_cell: 2,
            base_seed: 11,
            config: template,
        };
        let full = run_experiment(&ctx, &plan, &[]).unwrap();
        assert_eq!(full.rows.len(), 4);
        assert!(full.failures.is_empty());

        let partial = run_experiment(&ctx, &plan, &full.rows[..1]).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_experiment_table(&full.rows, &mut a).unwrap();
        write_experiment_table(&partial.rows, &mut b).unwrap();
        assert_eq!(a, b);
        let back = read_experiment_table(a.as_slice()).unwrap();
        assert_eq!(back, full.rows);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("X".parse::<Variant>().is_err());
    }
}

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use nilcolor::color::LoadOptions;
use nilcolor::ib::{epsilon_for_point, ib_frontier, ib_point, min_gnid_to_set, EpsilonMethod, FrontierConfig};
use nilcolor::nil::{
    init_dataset, init_stream, read_experiment_table, run_experiment, run_from_systems, run_nil_chain,
    write_experiment_table, write_transform_table, ExperimentContext, ExperimentPlan, ExperimentRow, InitMode,
};
use nilcolor::random_model::{generate_rm_batch, RMBatchConfig, RMLabel};
use nilcolor::report::{histogram_svg, ib_plane_svg, render_map, Series};
use nilcolor::stats::{self, Alternative};
use nilcolor::wcs::{load_wcs_dir, reference_languages, ParseOptions, ReferenceSource, WcsLanguage};
use nilcolor::{ChipGrid, Error, IBCurve, IBPoint, MeaningModel, NamingSystem};

use crate::config::Settings;
use crate::{Alt, Cli, Command, ExperimentArgs, Global, InitKind, RenderArgs, RunArgs, StatsArgs, TestKind};

const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#7f7f7f"];

struct Env {
    global: Global,
    settings: Settings,
    grid: ChipGrid,
}

impl Env {
    fn new(global: &Global) -> Result<Self> {
        let settings = Settings::load(global.config.as_deref())?;
        if settings.frontier_points.is_some_and(|n| n < 2) {
            return Err(Error::Validation("frontier_points must be at least 2".into()).into());
        }
        let grid = match &global.data {
            Some(d) if d.join("chips.tsv").exists() => {
                let prior_path = d.join("prior.tsv");
                let prior = if prior_path.exists() { Some(BufReader::new(File::open(&prior_path)?)) } else { None };
                ChipGrid::load(BufReader::new(File::open(d.join("chips.tsv"))?), prior, LoadOptions::default())?
            }
            _ => ChipGrid::bundled(),
        };
        fs::create_dir_all(&global.out).with_context(|| format!("creating {}", global.out.display()))?;
        Ok(Env { global: global.clone(), settings, grid })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.global.out.join(name)
    }

    fn seed(&self) -> u64 {
        self.global.seed.unwrap_or(0)
    }

    fn meaning_model(&self) -> Result<MeaningModel> {
        Ok(MeaningModel::new(&self.grid, self.settings.sigma_sq())?)
    }

    /// With `--data`, the survey files must be there; otherwise fixtures.
    fn references(&self) -> Result<Vec<WcsLanguage>> {
        match &self.global.data {
            Some(d) => Ok(load_wcs_dir(d, &self.grid, ParseOptions::default())?),
            None => {
                let (langs, src) = reference_languages(None, &self.grid)?;
                debug_assert_eq!(src, ReferenceSource::Fixture);
                eprintln!("note: no --data directory; using {} synthetic fixture languages", langs.len());
                Ok(langs)
            }
        }
    }

    fn cache_key(&self, cfg: &FrontierConfig) -> String {
        let mut h = Sha256::new();
        h.update(self.grid.content_hash().as_bytes());
        h.update(self.settings.sigma_sq().to_le_bytes());
        for b in &cfg.betas {
            h.update(b.to_le_bytes());
        }
        h.update(cfg.tol.to_le_bytes());
        h.update((cfg.max_sweeps as u64).to_le_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Cached curve for the current grid, σ² and schedule; computed on a miss.
    fn frontier(&self, mm: &MeaningModel) -> Result<(IBCurve, PathBuf, bool)> {
        let cfg = self.settings.frontier();
        let cache_dir = self.out("cache");
        fs::create_dir_all(&cache_dir)?;
        let path = cache_dir.join(format!("frontier-{}.csv", self.cache_key(&cfg)));
        if path.exists() {
            let curve = IBCurve::read_csv(BufReader::new(File::open(&path)?))?;
            return Ok((curve, path, true));
        }
        eprintln!("computing IB frontier over {} β values", cfg.betas.len());
        let curve = ib_frontier(&self.grid, mm, &cfg)?;
        if curve.num_flagged() > 0 {
            eprintln!("warning: {} β values did not converge and were dropped", curve.num_flagged());
        }
        let tmp = path.with_extension("tmp");
        curve.write_csv(BufWriter::new(File::create(&tmp)?))?;
        fs::rename(&tmp, &path)?;
        // Reload so cached and fresh runs see identical values.
        let curve = IBCurve::read_csv(BufReader::new(File::open(&path)?))?;
        Ok((curve, path, false))
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let env = Env::new(&cli.global)?;
    match &cli.command {
        Command::Frontier => frontier(&env),
        Command::Analyze { systems } => analyze(&env, systems),
        Command::RmGen => rm_gen(&env),
        Command::Run(args) => run(&env, args),
        Command::Experiment(args) => experiment(&env, args),
        Command::Stats(args) => stats_cmd(args),
        Command::Render(args) => render(&env, args),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn frontier(env: &Env) -> Result<()> {
    let mm = env.meaning_model()?;
    let (curve, cached, hit) = env.frontier(&mm)?;
    fs::copy(&cached, env.out("frontier.csv"))?;
    write_file(&env.out("frontier.svg"), &ib_plane_svg(&curve, &[]))?;
    let last = curve.envelope().last().copied().unwrap_or((0.0, 0.0));
    println!(
        "frontier: {} points{}, max complexity {:.3} bits, max accuracy {:.3} bits",
        curve.len(),
        if hit { " (cached)" } else { "" },
        last.0,
        last.1
    );
    Ok(())
}

fn read_system(path: &Path, grid: &ChipGrid) -> Result<NamingSystem> {
    let (sys, grid_id) = NamingSystem::from_tsv(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
    .with_context(|| format!("reading {}", path.display()))?;
    if !grid_id.is_empty() && grid_id != grid.content_hash() {
        eprintln!("warning: {} was written for grid {grid_id}", path.display());
    }
    if sys.num_chips() != grid.len() {
        return Err(Error::Dimension(format!("{} has {} chips, grid has {}", path.display(), sys.num_chips(), grid.len())).into());
    }
    Ok(sys)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn analyze(env: &Env, files: &[PathBuf]) -> Result<()> {
    let mm = env.meaning_model()?;
    let (curve, _, _) = env.frontier(&mm)?;
    let langs = env.references()?;
    let refs: Vec<NamingSystem> = langs.iter().map(|l| l.encoder.clone()).collect();
    // (id, system, index in the reference set to skip)
    let targets: Vec<(String, NamingSystem, Option<usize>)> = if files.is_empty() {
        langs.iter().enumerate().map(|(i, l)| (l.name.clone(), l.encoder.clone(), Some(i))).collect()
    } else {
        files.iter().map(|f| Ok((stem(f), read_system(f, &env.grid)?, None))).collect::<Result<_>>()?
    };
    let mut rows = Vec::with_capacity(targets.len());
    let mut points = Vec::with_capacity(targets.len());
    for (id, sys, skip) in targets {
        let point = ib_point(&sys, &env.grid, &mm)?;
        let fit = epsilon_for_point(point.complexity, point.accuracy, &curve, EpsilonMethod::ObjectiveGap)?;
        let others: Vec<NamingSystem> =
            refs.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, r)| r.clone()).collect();
        let (gnid, nearest) = if others.is_empty() { (f64::NAN, 0) } else { min_gnid_to_set(&sys, &others, &env.grid)? };
        let nearest_id = match skip {
            Some(s) if nearest >= s => &langs[nearest + 1].name,
            _ => &langs[nearest].name,
        };
        points.push(point);
        rows.push((id, sys.num_words(), point, fit.epsilon, gnid, nearest_id.clone()));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = csv::Writer::from_path(env.out("analysis.csv"))?;
    w.write_record(["id", "K", "complexity", "accuracy", "epsilon", "min_gnid", "nearest"])?;
    for (id, k, p, eps, gnid, nearest) in &rows {
        w.write_record([
            id.clone(),
            k.to_string(),
            p.complexity.to_string(),
            p.accuracy.to_string(),
            eps.to_string(),
            gnid.to_string(),
            nearest.clone(),
        ])?;
    }
    w.flush()?;
    write_file(
        &env.out("analysis.svg"),
        &ib_plane_svg(&curve, &[Series { label: "systems", color: COLORS[0], points: &points }]),
    )?;
    let eps: Vec<f64> = rows.iter().map(|r| r.3).collect();
    println!(
        "analyzed {} systems; median ε {:.4}",
        rows.len(),
        stats::median(&eps).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn rm_config(env: &Env) -> RMBatchConfig {
    RMBatchConfig {
        per_k: env.settings.rm_per_k(),
        threshold: env.settings.rm_threshold(),
        seed: env.seed(),
        ..RMBatchConfig::default()
    }
}

fn rm_gen(env: &Env) -> Result<()> {
    let mm = env.meaning_model()?;
    let (curve, _, _) = env.frontier(&mm)?;
    let refs: Vec<NamingSystem> = env.references()?.into_iter().map(|l| l.encoder).collect();
    let batch = generate_rm_batch(&env.grid, &mm, &curve, &refs, &rm_config(env))?;
    batch.write_manifest(BufWriter::new(File::create(env.out("rm_manifest.csv"))?))?;
    let dir = env.out("rm");
    fs::create_dir_all(&dir)?;
    let grid_id = env.grid.content_hash();
    for (i, s) in batch.systems.iter().enumerate() {
        write_file(&dir.join(format!("rm_{i:04}.tsv")), &s.system.to_tsv(&grid_id))?;
    }
    println!(
        "generated {} systems; {:.1}% dissimilar (min gNID ≥ {})",
        batch.systems.len(),
        100.0 * batch.dissimilar_fraction(),
        batch.threshold
    );
    Ok(())
}

fn context_parts(env: &Env) -> Result<(MeaningModel, IBCurve, Vec<NamingSystem>, Vec<String>)> {
    let mm = env.meaning_model()?;
    let (curve, _, _) = env.frontier(&mm)?;
    let langs = env.references()?;
    let ids = langs.iter().map(|l| l.name.clone()).collect();
    let refs = langs.into_iter().map(|l| l.encoder).collect();
    Ok((mm, curve, refs, ids))
}

fn run(env: &Env, args: &RunArgs) -> Result<()> {
    let cfg = env.settings.game(args.words, args.variant);
    cfg.validate(&env.grid)?;
    let (mm, curve, refs, ids) = context_parts(env)?;
    let ctx = ExperimentContext { grid: &env.grid, mm: &mm, curve: &curve, references: &refs, reference_ids: &ids };
    let grid_id = env.grid.content_hash();
    match args.init {
        InitKind::Uniform => {
            let seed = env.seed();
            let init = init_dataset(&env.grid, cfg.num_words, InitMode::Uniform, cfg.dataset_size, &mut init_stream(seed))?;
            let record = run_nil_chain(&env.grid, &mm, &cfg, &init, seed)?;
            record.write_trajectory(BufWriter::new(File::create(env.out("trajectory.csv"))?))?;
            write_file(&env.out("final_system.tsv"), &record.final_system.to_tsv(&grid_id))?;
            write_file(&env.out("final_map.svg"), &render_map(&record.final_system, &env.grid).to_svg(&format!("{} K={}", cfg.variant, cfg.num_words)))?;
            let point = record.final_point();
            let (epsilon, min_gnid, neighbor) = ctx.score(&record.final_system, &point)?;
            let row = ExperimentRow {
                variant: cfg.variant,
                num_words: cfg.num_words,
                seed,
                generations: record.generations,
                converged: record.converged,
                complexity: point.complexity,
                accuracy: point.accuracy,
                epsilon,
                min_gnid,
                wcs_neighbor: neighbor,
            };
            write_experiment_table(std::slice::from_ref(&row), BufWriter::new(File::create(env.out("run.csv"))?))?;
            println!(
                "{} K={} generations={} converged={} complexity={:.3} accuracy={:.3} ε={:.4} min gNID={:.3}",
                row.variant, row.num_words, row.generations, row.converged, row.complexity, row.accuracy, row.epsilon, row.min_gnid
            );
        }
        InitKind::RmD => {
            if args.chains == 0 {
                bail!(Error::Validation("--chains must be at least 1".into()));
            }
            let batch = generate_rm_batch(&env.grid, &mm, &curve, &refs, &rm_config(env))?;
            let starts: Vec<NamingSystem> =
                batch.with_label(RMLabel::Dissimilar).take(args.chains).map(|s| s.system.clone()).collect();
            if starts.len() < args.chains {
                eprintln!("warning: only {} RM_d systems available", starts.len());
            }
            if starts.is_empty() {
                bail!(Error::Validation("random-model batch has no dissimilar systems".into()));
            }
            let rows = run_from_systems(&ctx, &starts, &cfg, env.seed())?;
            write_transform_table(&rows, BufWriter::new(File::create(env.out("transform.csv"))?))?;
            let before: Vec<f64> = rows.iter().map(|r| r.gnid_before).collect();
            let after: Vec<f64> = rows.iter().map(|r| r.gnid_after).collect();
            println!(
                "{} chains from RM_d: mean min gNID {:.3} -> {:.3}",
                rows.len(),
                stats::mean(&before).unwrap_or(f64::NAN),
                stats::mean(&after).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

fn experiment(env: &Env, args: &ExperimentArgs) -> Result<()> {
    let Some(seed) = env.global.seed else {
        bail!(Error::Validation("experiment requires --seed so that resumed runs line up".into()));
    };
    if args.variants.is_empty() || args.ks.is_empty() {
        bail!(Error::Validation("need at least one variant and one K".into()));
    }
    let template = env.settings.game(args.ks[0], args.variants[0]);
    for &k in &args.ks {
        env.settings.game(k, args.variants[0]).validate(&env.grid)?;
    }
    let (mm, curve, refs, ids) = context_parts(env)?;
    let ctx = ExperimentContext { grid: &env.grid, mm: &mm, curve: &curve, references: &refs, reference_ids: &ids };
    let table = env.out("experiment.csv");
    let existing = if table.exists() { read_experiment_table(File::open(&table)?)? } else { Vec::new() };
    let plan = ExperimentPlan {
        cells: args.variants.iter().flat_map(|&v| args.ks.iter().map(move |&k| (v, k))).collect(),
        seeds_per_cell: args.seeds,
        base_seed: seed,
        config: template,
    };
    let outcome = run_experiment(&ctx, &plan, &existing)?;
    let tmp = table.with_extension("csv.tmp");
    write_experiment_table(&outcome.rows, BufWriter::new(File::create(&tmp)?))?;
    fs::rename(&tmp, &table)?;
    write_file(&env.out("experiment.svg"), &experiment_plot(&curve, &outcome.rows))?;
    for variant in &args.variants {
        let rows: Vec<&ExperimentRow> = outcome.rows.iter().filter(|r| r.variant == *variant).collect();
        let cx: Vec<f64> = rows.iter().map(|r| r.complexity).collect();
        let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        println!(
            "{variant}: {} chains, mean complexity {:.3}, median ε {:.4}",
            rows.len(),
            stats::mean(&cx).unwrap_or(f64::NAN),
            stats::median(&eps).unwrap_or(f64::NAN)
        );
    }
    if let Some((key, err)) = outcome.failures.into_iter().next() {
        return Err(anyhow::Error::new(err).context(format!("chain {} K={} seed={} failed", key.0, key.1, key.2)));
    }
    Ok(())
}

fn experiment_plot(curve: &IBCurve, rows: &[ExperimentRow]) -> String {
    let mut variants: Vec<_> = rows.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    let points: Vec<(String, Vec<IBPoint>)> = variants
        .iter()
        .map(|&v| {
            let pts = rows.iter().filter(|r| r.variant == v).map(|r| IBPoint::new(r.complexity, r.accuracy)).collect();
            (v.to_string(), pts)
        })
        .collect();
    let series: Vec<Series> = points
        .iter()
        .enumerate()
        .map(|(i, (label, pts))| Series { label, color: COLORS[i % COLORS.len()], points: pts })
        .collect();
    ib_plane_svg(curve, &series)
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<(f64, f64)>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{} has no column {name:?}", path.display())))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys, mut pairs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Format(format!("row {}: {s:?} is not a number", i + 2)).into())
        };
        let (a, b) = (parse(ix)?, parse(iy)?);
        if let Some(a) = a {
            xs.push(a);
        }
        if let Some(b) = b {
            ys.push(b);
        }
        if let (Some(a), Some(b)) = (a, b) {
            pairs.push((a, b));
        }
    }
    Ok((xs, ys, pairs))
}

fn stats_cmd(args: &StatsArgs) -> Result<()> {
    let (xs, ys, pairs) = read_columns(&args.file, &args.x, &args.y)?;
    let alt = match args.alternative {
        Alt::Less => Alternative::Less,
        Alt::Greater => Alternative::Greater,
        Alt::TwoSided => Alternative::TwoSided,
    };
    let result = match args.test {
        TestKind::Mwu => stats::mann_whitney_u(&xs, &ys, alt)?,
        TestKind::Wilcoxon => {
            let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
            stats::wilcoxon_signed_rank(&diffs, alt)?
        }
    };
    let adjusted = (result.p_value * args.comparisons.max(1) as f64).min(1.0);
    let mut out = std::io::stdout().lock();
    writeln!(out, "test,statistic,p_value,p_adjusted,n,m,method")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        match args.test {
            TestKind::Mwu => "mann-whitney",
            TestKind::Wilcoxon => "wilcoxon",
        },
        result.statistic,
        result.p_value,
        adjusted,
        result.n,
        result.m.map(|m| m.to_string()).unwrap_or_default(),
        match result.method {
            stats::Method::Exact => "exact",
            stats::Method::NormalApproximation => "normal",
        }
    )?;
    Ok(())
}

fn render(env: &Env, args: &RenderArgs) -> Result<()> {
    if args.systems.is_empty() && args.experiment.is_none() {
        bail!(Error::Validation("nothing to render; pass system files or --experiment".into()));
    }
    for path in &args.systems {
        let sys = read_system(path, &env.grid)?;
        let name = stem(path);
        write_file(&env.out(&format!("{name}.svg")), &render_map(&sys, &env.grid).to_svg(&name))?;
    }
    if let Some(table) = &args.experiment {
        let rows = read_experiment_table(File::open(table).with_context(|| format!("opening {}", table.display()))?)?;
        let mm = env.meaning_model()?;
        let (curve, _, _) = env.frontier(&mm)?;
        write_file(&env.out("ib_plane.svg"), &experiment_plot(&curve, &rows))?;
        let gnids: Vec<(String, Vec<f64>)> = {
            let mut variants: Vec<_> = rows.iter().map(|r| r.variant).collect();
            variants.sort();
            variants.dedup();
            variants
                .into_iter()
                .map(|v| (v.to_string(), rows.iter().filter(|r| r.variant == v).map(|r| r.min_gnid).collect()))
                .collect()
        };
        let samples: Vec<(&str, &str, &[f64])> = gnids
            .iter()
            .enumerate()
            .map(|(i, (l, xs))| (l.as_str(), COLORS[i % COLORS.len()], xs.as_slice()))
            .collect();
        write_file(&env.out("gnid_hist.svg"), &histogram_svg(&samples, 20, "min gNID to reference languages"))?;
    }
    Ok(())
}

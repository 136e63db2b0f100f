mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nilcolor::nil::Variant;

#[derive(Parser, Debug)]
#[command(name = "nilcolor", version, about = "Color naming: IB efficiency analysis and neural iterated learning")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    #[arg(long, global = true, value_name = "FILE", long_help = config::CONFIG_HELP)]
    pub config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Directory with survey files (term.txt, dict.txt, lang.txt, cnum.txt,
    /// SHA256SUMS) and optionally chips.tsv / prior.tsv. Without it the
    /// bundled chips and synthetic fixture languages are used.
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute (or reuse the cached) IB frontier: frontier.csv and frontier.svg.
    Frontier,
    /// Complexity, accuracy, ε and nearest reference language for naming
    /// systems (reference languages when no files are given).
    Analyze {
        /// Naming system files (`K=<k> grid=<id>` header then K rows).
        systems: Vec<PathBuf>,
    },
    /// Generate a random-model batch: rm_manifest.csv and rm/*.tsv.
    RmGen,
    /// Run NIL chains for one configuration.
    Run(RunArgs),
    /// Run the (variant, K, seed) grid; resumes from an existing experiment.csv.
    Experiment(ExperimentArgs),
    /// Rank test on two columns of a CSV file.
    Stats(StatsArgs),
    /// Render naming-system mosaics and experiment IB-plane plots.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    /// Random word per sampled chip.
    Uniform,
    /// Datasets sampled from random-model systems dissimilar to every reference.
    RmD,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, default_value = "IL+C")]
    pub variant: Variant,
    /// Vocabulary size.
    #[arg(long, short = 'k', default_value_t = 5)]
    pub words: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Uniform)]
    pub init: InitKind,
    /// Number of RM_d starting systems (with `--init rm-d`).
    #[arg(long, default_value_t = 3)]
    pub chains: usize,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', default_value = "IL+C,IL,C")]
    pub variants: Vec<Variant>,
    #[arg(long = "k", value_delimiter = ',', default_value = "3,5,7,10")]
    pub ks: Vec<usize>,
    /// Chains per (variant, K) cell.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    /// Mann-Whitney U on two independent samples.
    Mwu,
    /// Wilcoxon signed-rank on paired differences x − y.
    Wilcoxon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Alt {
    Less,
    Greater,
    TwoSided,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// CSV file with a header row.
    pub file: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, value_enum, default_value_t = TestKind::Mwu)]
    pub test: TestKind,
    #[arg(long, value_enum, default_value_t = Alt::TwoSided)]
    pub alternative: Alt,
    /// Number of comparisons for the Bonferroni adjustment.
    #[arg(long, default_value_t = 1)]
    pub comparisons: usize,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Naming system files to draw as mosaics.
    pub systems: Vec<PathBuf>,
    /// Experiment table to plot on the IB plane.
    #[arg(long)]
    pub experiment: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nilcolor::Error>() {
            return match e {
                nilcolor::Error::DataMissing(_) => 2,
                nilcolor::Error::Numerical(_) => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

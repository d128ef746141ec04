use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod failure;

use failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Scgoma,
    Rmsp,
}

impl From<MethodArg> for wgom::Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Scgoma => wgom::Method::Scgoma,
            MethodArg::Rmsp => wgom::Method::Rmsp,
        }
    }
}

/// Weighted grade-of-membership analysis: simulate, estimate, select K.
#[derive(Debug, Parser)]
#[command(name = "wgom", version, about)]
pub struct Cli {
    /// Seed for every random choice [default: 0, or the experiment file's].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory. Commands that print a single table or JSON
    /// document write to stdout when this is not given.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Largest candidate number of classes.
    #[arg(long, global = true, default_value_t = wgom::selection::DEFAULT_K_MAX)]
    pub k_max: usize,

    /// Replicates per grid point; overrides the experiment file.
    #[arg(long, global = true)]
    pub replicates: Option<usize>,

    /// Highly-mixed and highly-pure cut-offs for `profile`.
    #[arg(long, global = true, default_value = "0.6,0.9")]
    pub thresholds: String,

    /// Drop subjects and items without any nonzero response (one pass).
    #[arg(long, global = true)]
    pub prune: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a response matrix and its ground truth from a JSON config.
    Generate { config: PathBuf },

    /// Estimate memberships and item parameters for a given K.
    Estimate {
        matrix: PathBuf,
        #[arg(short, long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Scgoma)]
        method: MethodArg,
    },

    /// Pick K by maximising fuzzy weighted modularity.
    SelectK {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Scgoma)]
        method: MethodArg,
    },

    /// Run a simulation grid from a JSON experiment file.
    Experiment { spec: PathBuf },

    /// Mixed/pure proportions and class balance of an estimated membership.
    Profile {
        membership: PathBuf,
        /// Response matrix, to also report the fraction of zero entries.
        #[arg(long)]
        responses: Option<PathBuf>,
    },

    /// Permutation-aligned errors of an estimate against the truth.
    Evaluate {
        #[arg(long)]
        membership: PathBuf,
        #[arg(long)]
        true_membership: PathBuf,
        #[arg(long, requires = "true_item_params")]
        item_params: Option<PathBuf>,
        #[arg(long, requires = "item_params")]
        true_item_params: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Generate { config } => commands::generate(cli, config),
        Command::Estimate { matrix, k, method } => commands::estimate(cli, matrix, *k, (*method).into()),
        Command::SelectK { matrix, method } => commands::select_k(cli, matrix, (*method).into()),
        Command::Experiment { spec } => commands::experiment(cli, spec),
        Command::Profile { membership, responses } => {
            commands::profile(cli, membership, responses.as_deref())
        }
        Command::Evaluate { membership, true_membership, item_params, true_item_params } => {
            commands::evaluate(
                cli,
                membership,
                true_membership,
                item_params.as_deref().zip(true_item_params.as_deref()),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("wgom: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

//! `semiblind` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semiblind::sem::SemConfig;
use semiblind::Error;

#[derive(Debug, Parser)]
#[command(name = "semiblind", version, about = "Semi-blind inference of network topologies and graph processes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the command's configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Ground truth: a directory written by `synth`, or a single CSV file.
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    /// Write the tracked topologies every this many slots (track only).
    #[arg(long, global = true)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic graph, signals and partial observations.
    Synth(SynthArgs),
    /// Joint inference of a SEM topology and signals.
    Jisg(BatchArgs),
    /// Joint inference of SVARM topologies and the graph process.
    Jisgot(BatchArgs),
    /// Fixed-lag tracking of time-varying SVARM topologies from stdin.
    Track(TrackArgs),
    /// Identifiability checks and noiseless recovery.
    Ident(IdentArgs),
    /// Score estimates against ground truth, or run the Kronecker benchmark.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Sem,
    Svarm,
    Bandlimited,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Number of nodes; must be a power of the Kronecker seed size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub slots: Option<usize>,
    /// Nodes sampled per slot.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub bandwidth: Option<usize>,
    #[arg(long)]
    pub process_sigma: Option<f64>,
    #[arg(long)]
    pub obs_sigma: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// ADMM penalty parameter.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub tol_outer: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub tol_inner: Option<f64>,
    #[arg(long)]
    pub max_admm: Option<usize>,
}

impl SolverArgs {
    pub fn apply(&self, cfg: &mut SemConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(mu, lambda1, lambda2, rho, max_outer, tol_outer, max_inner, tol_inner, max_admm);
    }
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Observations JSON as written by `synth`.
    #[arg(long)]
    pub obs: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Number of nodes in the stream.
    #[arg(long)]
    pub n: usize,
    /// Window length in slots.
    #[arg(long)]
    pub lag: Option<usize>,
    /// Weight of the pull toward the previous topologies.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_bcd: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct IdentArgs {
    #[arg(long)]
    pub obs: PathBuf,
    /// Maximum number of nonzeros per row.
    #[arg(long)]
    pub sparsity: usize,
    /// Also recover the topology by enumeration.
    #[arg(long)]
    pub recover: bool,
    /// Cap on the number of subsets examined.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated adjacency CSV to score against `--truth`.
    #[arg(long, conflicts_with = "experiment", required_unless_present = "experiment")]
    pub estimate: Option<PathBuf>,
    /// Estimated signals CSV; needs a `--truth` directory with signals.csv.
    #[arg(long, requires = "estimate")]
    pub signals: Option<PathBuf>,
    /// Run a benchmark instead of scoring files.
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, requires = "experiment")]
    pub replicates: Option<usize>,
    /// Write zeros in the runtime column so reports are reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Kronecker,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded(_) => 3,
        e if e.is_numeric() => 4,
        Error::InvalidSpec(_)
        | Error::InvalidArgument(_)
        | Error::InvalidConfig(_)
        | Error::Shape(_)
        | Error::Parse(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::BudgetExceeded("subsets".into())), 3);
        assert_eq!(exit_code(&Error::SingularModel { condition: 1e20 }), 4);
        assert_eq!(exit_code(&Error::NotPositiveDefinite { slot: 2 }), 4);
        assert_eq!(exit_code(&Error::Shape("2x2 vs 3x3".into())), 2);
        assert_eq!(exit_code(&Error::Parse("bad".into())), 2);
        assert_eq!(exit_code(&Error::InconsistentData { row: 0 }), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
